//! Experiment protocols built as pulse schedules, and the figures of merit
//! extracted from them.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::device::Device;
use crate::dynamics::{
    inner, integrated_signal_functional, lowering_operator, number_operator, principal_angle, rotate_quadratures,
    run_schedule, ControlPoint, DrivePulse, EmissionRecord, Evolver, Generator, RecordOptions, ScheduleControls,
    StepAccumulators,
};
use crate::error::{Error, Result};
use crate::fit::{fit_damped_sine, fit_exponential, FitResult};
use crate::schedule::{FluxSegment, PulseSchedule, DEFAULT_RAMP};

/// Gaussian excitation pulses: σ = 5 ns in a 20 ns window.
pub const PULSE_SIGMA: f64 = 5e-9;
pub const PULSE_LENGTH: f64 = 20e-9;
/// Settling time between a flux step and the next drive pulse.
pub const LEAD: f64 = 5e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureOfMerit {
    pub name: String,
    pub value: f64,
    pub uncertainty: f64,
    /// Time window the underlying fit used (s).
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    Pi,
    HalfPi,
}

/// Closed-form two-level rates at a flux bias, with thermal enhancement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelRates {
    /// (Γ₁ + Γ₁,ᵢ + Γ_exc)(2n̄ + 1).
    pub gamma1_eff: f64,
    pub gamma2: f64,
    /// Decay rate of resonant Rabi oscillations, (Γ₁,eff + Γ₂)/2.
    pub gamma_rabi: f64,
}

pub fn two_level_rates(device: &Device, flux: f64) -> TwoLevelRates {
    let p = &device.transmon;
    let nbar = p.thermal_occupation();
    let g1 = (device.gamma1(flux) + p.gamma1_intrinsic + p.gamma_excitation_line) * (2.0 * nbar + 1.0);
    let g2 = 0.5 * g1 + p.gammaphi_total(flux);
    TwoLevelRates {
        gamma1_eff: g1,
        gamma2: g2,
        gamma_rabi: 0.5 * (g1 + g2),
    }
}

fn ideal_pulse_response(device: &Device, pulse: &DrivePulse) -> DensityMatrix {
    let params = device.transmon.without_dissipation();
    let gen = Generator::new(&params);
    let controls = |t: f64| ControlPoint {
        drive: pulse.complex_amplitude(t),
        ..ControlPoint::IDLE
    };
    let peak = ControlPoint {
        drive: C64::new(pulse.peak_amplitude(), 0.0),
        ..ControlPoint::IDLE
    };
    let dt = gen.dt_max(pulse.peak_amplitude(), pulse.carrier_detuning, &peak);
    let mut x = DensityMatrix::ground(params.levels).to_vec();
    Evolver::new(&gen).evolve(
        &controls,
        &mut x,
        pulse.start,
        pulse.end(),
        dt,
        &mut StepAccumulators::default(),
        |_, _| {},
    );
    DensityMatrix::from_vec(params.levels, &x)
}

/// Gaussian pulse (start 0) whose amplitude maximises the excited population
/// (π) or |⟨b⟩| (π/2) in a dissipation-free simulation of the full ladder.
pub fn calibrate_pulse(device: &Device, excitation: Excitation) -> Result<DrivePulse> {
    device.validate()?;
    // Area π for a Gaussian of width σ.
    let nominal = PI / (PULSE_SIGMA * (2.0 * PI).sqrt());
    let (lo, hi) = match excitation {
        Excitation::Pi => (0.6 * nominal, 1.4 * nominal),
        Excitation::HalfPi => (0.3 * nominal, 0.7 * nominal),
    };
    let score = |a: f64| {
        let rho = ideal_pulse_response(device, &DrivePulse::gaussian(a, PULSE_SIGMA, 0.0, PULSE_LENGTH));
        match excitation {
            Excitation::Pi => rho.population(1),
            Excitation::HalfPi => {
                let d = rho.dim();
                let b: C64 = (1..d).map(|j| rho.matrix()[(j, j - 1)] * (j as f64).sqrt()).sum();
                b.norm()
            }
        }
    };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (score(c), score(d));
    while b - a > 1e-7 * nominal {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = score(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = score(d);
        }
    }
    Ok(DrivePulse::gaussian(0.5 * (a + b), PULSE_SIGMA, 0.0, PULSE_LENGTH))
}

fn thermal_state(device: &Device) -> DensityMatrix {
    let p = &device.transmon;
    DensityMatrix::thermal(p.levels, p.omega01, p.alpha, p.t_eff)
}

fn check_grid(grid: &[f64], name: &'static str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param(name, "grid is empty"));
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param(name, "grid must be non-negative and strictly increasing"));
    }
    Ok(())
}

/// Evolves from `start` with `controls` and returns the state at each time
/// in `times` (ascending, ≥ t0).
fn snapshots<C: crate::dynamics::Controls + ?Sized>(
    gen: &Generator,
    controls: &C,
    start: &[C64],
    t0: f64,
    times: &[f64],
    dt: f64,
) -> Vec<Vec<C64>> {
    let mut ev = Evolver::new(gen);
    let mut x = start.to_vec();
    let mut t = t0;
    let mut acc = StepAccumulators::default();
    times
        .iter()
        .map(|&s| {
            ev.evolve(controls, &mut x, t, s, dt, &mut acc, |_, _| {});
            t = s;
            x.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiResult {
    pub durations: Vec<f64>,
    /// Window-averaged quadratures and power after each Rabi pulse.
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub power: Vec<f64>,
    /// Averaging window after the pulse end (s).
    pub window: f64,
    pub fit_i: FitResult,
    pub fit_power: Option<FitResult>,
    pub t_r: FigureOfMerit,
    /// Phase offset between power and quadrature oscillations (rad, in [0, π]).
    pub phase_offset: Option<f64>,
}

/// Square Rabi pulses of every duration in `durations` at constant flux.
/// After each pulse the emitted quadratures and power are averaged over
/// [end, end + 5/Γ₂]; a damped-sine fit of the quadrature gives T_R.
pub fn rabi_experiment(device: &Device, flux: f64, amplitude: f64, durations: &[f64]) -> Result<RabiResult> {
    device.validate()?;
    check_grid(durations, "durations")?;
    let gen = Generator::new(&device.transmon);
    let t_max = durations[durations.len() - 1];
    let window = 5.0 / two_level_rates(device, flux).gamma2;

    let driven = PulseSchedule::idle(flux, t_max).with_drive(DrivePulse::square(amplitude, 0.0, t_max.max(1e-12)));
    let c_drive = ScheduleControls::new(device, &driven, true);
    let free = PulseSchedule::idle(flux, window);
    let c_free = ScheduleControls::new(device, &free, true);
    let dt = c_drive.dt_max(&gen).min(c_free.dt_max(&gen));

    let g1 = device.gamma1(flux);
    let w_b = move |_: f64| 2.0 * g1.sqrt() / window;
    let w_n = move |_: f64| g1 / window;
    let b = lowering_operator(gen.dim());
    let n = number_operator(gen.dim());
    let y_b = integrated_signal_functional(&gen, &c_free, &b, &w_b, 0.0, window, dt);
    let y_n = integrated_signal_functional(&gen, &c_free, &n, &w_n, 0.0, window, dt);

    let states = snapshots(&gen, &c_drive, &thermal_state(device).to_vec(), 0.0, durations, dt);
    let mut i = Vec::with_capacity(states.len());
    let mut q = Vec::with_capacity(states.len());
    let mut power = Vec::with_capacity(states.len());
    for x in &states {
        let s = inner(&y_b, x);
        i.push(s.re);
        q.push(-s.im);
        power.push(inner(&y_n, x).re);
    }
    let theta = principal_angle(&i, &q);
    rotate_quadratures(&mut i, &mut q, theta);

    let fit_i = fit_damped_sine(durations, &i)?;
    let fit_power = fit_damped_sine(durations, &power).ok();
    let phase_offset = fit_power.as_ref().map(|fp| {
        let d = (fp.get("phase").unwrap() - fit_i.get("phase").unwrap()).rem_euclid(2.0 * PI);
        if d > PI {
            2.0 * PI - d
        } else {
            d
        }
    });
    let t_r = FigureOfMerit {
        name: "T_R".into(),
        value: fit_i.get("tau").unwrap(),
        uncertainty: fit_i.uncertainty("tau").unwrap(),
        window: (durations[0], t_max),
    };
    Ok(RabiResult {
        durations: durations.to_vec(),
        i,
        q,
        power,
        window,
        fit_i,
        fit_power,
        t_r,
        phase_offset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayResult {
    pub record: EmissionRecord,
    pub fit: FitResult,
    pub t2_star: FigureOfMerit,
}

/// π/2 pulse at constant flux followed by free decay of the emitted
/// quadrature; an exponential fit after the pulse gives T₂*.
pub fn free_decay_experiment(device: &Device, flux: f64, half_pi: &DrivePulse) -> Result<DecayResult> {
    let pulse = DrivePulse {
        start: 0.0,
        ..half_pi.clone()
    };
    let rates = two_level_rates(device, flux);
    let window = if rates.gamma2 > 0.0 { 8.0 / rates.gamma2 } else { 1e-6 };
    let end = pulse.end();
    let schedule = PulseSchedule::idle(flux, end + window)
        .with_drive(pulse)
        .with_marker(0.0, "excitation");
    let mut record = run_schedule(device, &schedule, &RecordOptions::default())?;
    let from = end + 2e-9;
    let idx: Vec<usize> = (0..record.len()).filter(|&k| record.t[k] >= from).collect();
    let mut i: Vec<f64> = idx.iter().map(|&k| record.i[k]).collect();
    let mut q: Vec<f64> = idx.iter().map(|&k| record.q[k]).collect();
    let theta = principal_angle(&i, &q);
    record.rotate(theta);
    rotate_quadratures(&mut i, &mut q, theta);
    let t: Vec<f64> = idx.iter().map(|&k| record.t[k]).collect();
    let fit = fit_exponential(&t, &i, false)?;
    let t2_star = FigureOfMerit {
        name: "T2*".into(),
        value: fit.get("tau").unwrap(),
        uncertainty: fit.uncertainty("tau").unwrap(),
        window: (from, end + window),
    };
    Ok(DecayResult { record, fit, t2_star })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredResult {
    pub record: EmissionRecord,
    /// Start of the flux step back to strong coupling (s).
    pub release: f64,
    /// Photons emitted after the release (∫Γ₁⟨n⟩ dt).
    pub burst_photons: f64,
    /// Exponential fit of the quadrature tail after the release, when there is one.
    pub tail_fit: Option<FitResult>,
}

/// Decouple, excite, store for `storage`, then step back to `coupled_flux`
/// with a square flux edge and record the burst.
pub fn triggered_emission(
    device: &Device,
    storage: f64,
    pulse: Option<&DrivePulse>,
    coupled_flux: f64,
) -> Result<TriggeredResult> {
    if !(storage >= 0.0) || !storage.is_finite() {
        return Err(Error::param("storage_time", "must be non-negative"));
    }
    let dec = device.decoupling_flux()?;
    let prep = pulse.map(|p| p.duration).unwrap_or(0.0);
    let release = DEFAULT_RAMP + LEAD + prep + storage;
    let rates = two_level_rates(device, coupled_flux);
    let tail = 8.0 / rates.gamma2;
    let mut schedule = PulseSchedule::idle(coupled_flux, release + DEFAULT_RAMP + tail)
        .with_flux(FluxSegment::square(dec, 0.0, release))
        .with_marker(release, "release");
    if let Some(p) = pulse {
        let start = DEFAULT_RAMP + LEAD;
        schedule = schedule
            .with_drive(DrivePulse { start, ..p.clone() })
            .with_marker(start, "excitation");
        schedule.markers.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    let mut record = run_schedule(device, &schedule, &RecordOptions::default())?;
    let from = release + DEFAULT_RAMP;
    let idx: Vec<usize> = (0..record.len()).filter(|&k| record.t[k] >= from).collect();
    let i: Vec<f64> = idx.iter().map(|&k| record.i[k]).collect();
    let q: Vec<f64> = idx.iter().map(|&k| record.q[k]).collect();
    record.rotate(principal_angle(&i, &q));
    // The integrator's photon count is exact; only the (decoupled) part
    // before the release comes from the sampled power.
    let burst_photons = record.emitted_photons - trapezoid_between(&record.t, &record.power, 0.0, release);
    let tail_i: Vec<f64> = idx.iter().map(|&k| record.i[k]).collect();
    let t: Vec<f64> = idx.iter().map(|&k| record.t[k]).collect();
    let tail_fit = fit_exponential(&t, &tail_i, false).ok().filter(|f| !f.degenerate);
    Ok(TriggeredResult {
        record,
        release,
        burst_photons,
        tail_fit,
    })
}

pub(crate) fn trapezoid_between(t: &[f64], y: &[f64], from: f64, to: f64) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .filter(|(tw, _)| tw[0] >= from && tw[1] <= to)
        .map(|(tw, yw)| 0.5 * (yw[0] + yw[1]) * (tw[1] - tw[0]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageSweep {
    pub delays: Vec<f64>,
    /// Integrated emitted quadrature after release, rotated into I.
    pub signal: Vec<f64>,
    pub fit: FitResult,
    pub figure: FigureOfMerit,
    /// Pure dephasing time derived from T₂ and T₁ (T₂ experiment only).
    pub t_phi: Option<f64>,
}

/// Shared protocol of the intrinsic-coherence measurements: `prep` pulses at
/// the decoupling point, storage τ, optional `readout` pulse, release to
/// `coupled_flux`, and integration of the emitted quadrature.
fn storage_sweep(
    device: &Device,
    prep: &[&DrivePulse],
    readout: Option<&DrivePulse>,
    delays: &[f64],
    coupled_flux: f64,
) -> Result<Vec<f64>> {
    device.validate()?;
    check_grid(delays, "delays")?;
    let dec = device.decoupling_flux()?;
    let gen = Generator::new(&device.transmon);

    // Preparation and storage at the decoupling point.
    let mut prep_sched = PulseSchedule::idle(dec, 0.0);
    let mut t = 0.0;
    for p in prep {
        prep_sched = prep_sched.with_drive(DrivePulse {
            start: t,
            ..(*p).clone()
        });
        t += p.duration;
    }
    prep_sched.duration = t;
    let c_prep = ScheduleControls::new(device, &prep_sched, true);

    // Read-out: optional pulse, then release and integration.
    let r_len = readout.map(|p| p.duration).unwrap_or(0.0);
    let tail = 8.0 / two_level_rates(device, coupled_flux).gamma2;
    let mut read = PulseSchedule::idle(coupled_flux, r_len + DEFAULT_RAMP + tail).with_flux(FluxSegment::square(
        dec,
        -DEFAULT_RAMP,
        DEFAULT_RAMP + r_len,
    ));
    if let Some(p) = readout {
        read = read.with_drive(DrivePulse {
            start: 0.0,
            ..p.clone()
        });
    }
    let c_read = ScheduleControls::new(device, &read, true);
    let dt = c_prep.dt_max(&gen).min(c_read.dt_max(&gen));

    let weight = |s: f64| 2.0 * device.gamma1(read.flux_at(s)).sqrt();
    let y = integrated_signal_functional(
        &gen,
        &c_read,
        &lowering_operator(gen.dim()),
        &weight,
        0.0,
        read.duration,
        dt,
    );

    let mut x = thermal_state(device).to_vec();
    Evolver::new(&gen).evolve(&c_prep, &mut x, 0.0, t, dt, &mut StepAccumulators::default(), |_, _| {});
    let hold_sched = PulseSchedule::idle(dec, 0.0);
    let hold = ScheduleControls::new(device, &hold_sched, true);
    let states = snapshots(&gen, &hold, &x, 0.0, delays, dt);
    let s: Vec<C64> = states.iter().map(|x| inner(&y, x)).collect();
    let mut i: Vec<f64> = s.iter().map(|v| v.re).collect();
    let mut q: Vec<f64> = s.iter().map(|v| -v.im).collect();
    let theta = principal_angle(&i, &q);
    rotate_quadratures(&mut i, &mut q, theta);
    Ok(i)
}

/// π at the decoupling point, storage τ, π/2, release; T₁,ᵢ from an
/// exponential fit (with offset) of the integrated signal against τ.
pub fn intrinsic_t1_experiment(
    device: &Device,
    pi: &DrivePulse,
    half_pi: &DrivePulse,
    delays: &[f64],
    coupled_flux: f64,
) -> Result<StorageSweep> {
    let signal = storage_sweep(device, &[pi], Some(half_pi), delays, coupled_flux)?;
    let fit = fit_exponential(delays, &signal, true)?;
    let figure = FigureOfMerit {
        name: "T1_i".into(),
        value: fit.get("tau").unwrap(),
        uncertainty: fit.uncertainty("tau").unwrap(),
        window: (delays[0], delays[delays.len() - 1]),
    };
    Ok(StorageSweep {
        delays: delays.to_vec(),
        signal,
        fit,
        figure,
        t_phi: None,
    })
}

/// π/2 at the decoupling point, storage τ, release; T₂,ᵢ* from an
/// exponential fit, and T_φ,ᵢ from 1/T_φ = 1/T₂ − 1/(2T₁) with the given T₁.
pub fn intrinsic_t2_experiment(
    device: &Device,
    half_pi: &DrivePulse,
    delays: &[f64],
    t1: f64,
    coupled_flux: f64,
) -> Result<StorageSweep> {
    let signal = storage_sweep(device, &[half_pi], None, delays, coupled_flux)?;
    let fit = fit_exponential(delays, &signal, false)?;
    let t2 = fit.get("tau").unwrap();
    let inv = 1.0 / t2 - 0.5 / t1;
    let figure = FigureOfMerit {
        name: "T2_i*".into(),
        value: t2,
        uncertainty: fit.uncertainty("tau").unwrap(),
        window: (delays[0], delays[delays.len() - 1]),
    };
    Ok(StorageSweep {
        delays: delays.to_vec(),
        signal,
        fit,
        figure,
        t_phi: Some(if inv > 0.0 { 1.0 / inv } else { f64::INFINITY }),
    })
}

/// Emission (jitter) time at full coupling from Γ₂ = Γ₁/2 + Γ_φ, and the
/// storage/jitter ratio T₁,ᵢ/T₁,jit.
pub fn jitter_figure(t1_i: f64, t2_min: f64, gamma_phi: f64) -> Result<(f64, f64)> {
    let g1_half = 1.0 / t2_min - gamma_phi;
    if !(g1_half > 0.0) || !(t1_i > 0.0) {
        return Err(Error::param("t2_min", "Γ₂ must exceed Γ_φ"));
    }
    let t1_jit = 1.0 / (2.0 * g1_half);
    Ok((t1_jit, t1_i / t1_jit))
}
