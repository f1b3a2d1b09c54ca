//! State-preparation and emitted-photon fidelities, and a loss budget.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{psd_sqrt, DensityMatrix};
use crate::device::Device;
use crate::dynamics::{
    inner, lowering_operator, run_schedule_from, AdjointSource, Controls, DrivePulse, Evolver, Generator,
    RecordOptions, ScheduleControls, StepAccumulators,
};
use crate::error::{Error, Result};
use crate::schedule::{FluxSegment, PulseSchedule, DEFAULT_RAMP};
use crate::sequencer::{calibrate_pulse, Excitation};

const FIDELITY_EIG_FLOOR: f64 = 1e-10;
/// Emission window in units of the coupled-point lifetime.
const EMISSION_LIFETIMES: f64 = 20.0;
/// Integration step as a fraction of the coupled-point lifetime.
const EMISSION_STEP: f64 = 1e-3;

/// Uhlmann fidelity Tr[(√ρ σ √ρ)^{1/2}].
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    rho.validate()?;
    sigma.validate()?;
    Ok(uhlmann(rho.matrix(), sigma.matrix()))
}

fn uhlmann(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> f64 {
    let s = psd_sqrt(rho);
    let m = &s * sigma * &s;
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let f: f64 = h
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| if l > FIDELITY_EIG_FLOOR { l.sqrt() } else { 0.0 })
        .sum();
    f.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// |1⟩.
    Fock,
    /// (|0⟩ + |1⟩)/√2.
    Superposition,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Fock, Target::Superposition];

    pub fn state(self, dim: usize) -> DensityMatrix {
        let mut amp = vec![C64::new(0.0, 0.0); dim];
        match self {
            Target::Fock => amp[1] = C64::new(1.0, 0.0),
            Target::Superposition => {
                amp[0] = C64::new(1.0, 0.0);
                amp[1] = C64::new(1.0, 0.0);
            }
        }
        DensityMatrix::pure(&amp)
    }

    fn excitation(self) -> Excitation {
        match self {
            Target::Fock => Excitation::Pi,
            Target::Superposition => Excitation::HalfPi,
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Fock => "fock",
            Target::Superposition => "superposition",
        })
    }
}

fn prepare(device: &Device, pulse: &DrivePulse) -> Result<DensityMatrix> {
    let dec = device.decoupling_flux()?;
    let pulse = DrivePulse {
        start: 0.0,
        ..pulse.clone()
    };
    let schedule = PulseSchedule::idle(dec, pulse.end()).with_drive(pulse);
    let p = &device.transmon;
    let initial = DensityMatrix::thermal(p.levels, p.omega01, p.alpha, p.t_eff);
    let opts = RecordOptions {
        sample_interval: schedule.duration.max(1e-12),
        flux_dephasing: false,
        ..RecordOptions::default()
    };
    Ok(run_schedule_from(device, &schedule, &initial, &opts)?.1)
}

/// Calibrated Gaussian pulse for `target`, with its drive phase set so that
/// the prepared coherence ⟨b⟩ is real and positive.
pub fn preparation_pulse(device: &Device, target: Target) -> Result<DrivePulse> {
    let pulse = calibrate_pulse(device, target.excitation())?;
    if target == Target::Fock {
        return Ok(pulse);
    }
    let mut ideal = device.clone();
    ideal.transmon = device.transmon.without_dissipation();
    let coherence = |p: &DrivePulse| prepare(&ideal, p).map(|rho| rho.matrix()[(1, 0)]);
    let theta = coherence(&pulse)?.arg();
    // The sign of the phase response depends on the drive convention; keep
    // whichever choice lands on the positive real axis.
    let plus = pulse.clone().with_phase(pulse.phase + theta);
    if coherence(&plus)?.arg().abs() < 1e-3 {
        return Ok(plus);
    }
    Ok(pulse.clone().with_phase(pulse.phase - theta))
}

/// Fidelity of the state left by `pulse` on the thermal state at the
/// decoupling point, against the target embedded in the full ladder.
pub fn preparation_fidelity(device: &Device, target: Target, pulse: &DrivePulse) -> Result<f64> {
    if device.transmon.levels < 2 {
        return Err(Error::param("levels", "need at least two levels"));
    }
    let rho = prepare(device, pulse)?;
    Ok(uhlmann(target.state(rho.dim()).matrix(), rho.matrix()))
}

/// Ideal emitted mode ξ(t) = √Γ₁(t) exp(−½∫Γ₁), normalised over the window,
/// tabulated on a uniform grid and interpolated linearly.
struct ModeFunction {
    t0: f64,
    h: f64,
    weight: Vec<f64>,
}

impl ModeFunction {
    fn new<C: Controls + ?Sized>(controls: &C, t0: f64, t1: f64, h: f64) -> Self {
        let n = ((t1 - t0) / h).ceil() as usize + 1;
        let g: Vec<f64> = (0..n).map(|k| controls.at(t0 + k as f64 * h).gamma1).collect();
        let mut cum = 0.0;
        let mut xi = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                cum += 0.5 * h * (g[k - 1] + g[k]);
            }
            xi.push(g[k].sqrt() * (-0.5 * cum).exp());
        }
        let norm = (1.0 - (-cum).exp()).sqrt();
        let weight = xi
            .iter()
            .zip(&g)
            .map(|(x, gk)| if norm > 0.0 { x * gk.sqrt() / norm } else { 0.0 })
            .collect();
        ModeFunction { t0, h, weight }
    }

    /// ξ(t)√Γ₁(t), the weight that projects √Γ₁ b onto the mode.
    fn at(&self, t: f64) -> f64 {
        let pos = ((t - self.t0) / self.h).max(0.0);
        let k = (pos.floor() as usize).min(self.weight.len() - 2);
        let f = (pos - k as f64).min(1.0);
        self.weight[k] * (1.0 - f) + self.weight[k + 1] * f
    }
}

/// Single-mode photon state (vacuum/one-photon block) of the emitted field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonModeState {
    /// ⟨a†a⟩ of the mode.
    pub occupation: f64,
    /// ⟨a⟩ of the mode.
    pub coherence: C64,
}

impl PhotonModeState {
    /// Two-level density matrix; occupation clipped to [0, 1] and coherence
    /// shrunk onto the positivity boundary if truncation pushed it outside.
    pub fn density(&self) -> DensityMatrix {
        let n = self.occupation.clamp(0.0, 1.0);
        let bound = (n * (1.0 - n)).sqrt();
        let c = if self.coherence.norm() > bound {
            self.coherence * (bound / self.coherence.norm())
        } else {
            self.coherence
        };
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(1.0 - n, 0.0);
        m[(1, 1)] = C64::new(n, 0.0);
        m[(1, 0)] = c;
        m[(0, 1)] = c.conj();
        DensityMatrix::from_matrix_unchecked(m)
    }
}

/// Releases `state` from the decoupling point to `coupled_flux` and returns
/// the state of the emitted mode. Pure dephasing is the intrinsic part only.
pub fn emitted_mode(device: &Device, state: &DensityMatrix, coupled_flux: f64) -> Result<PhotonModeState> {
    let dec = device.decoupling_flux()?;
    let g_c = device.gamma1(coupled_flux);
    if !(g_c > 0.0) {
        return Err(Error::param("coupled_flux", "no emission at the coupled bias"));
    }
    let window = DEFAULT_RAMP + EMISSION_LIFETIMES / g_c;
    let schedule =
        PulseSchedule::idle(coupled_flux, window).with_flux(FluxSegment::square(dec, -DEFAULT_RAMP, DEFAULT_RAMP));
    let controls = ScheduleControls::new(device, &schedule, false);
    let gen = Generator::new(&device.transmon);
    let dt = controls.dt_max(&gen).min(EMISSION_STEP / g_c);
    let mode = ModeFunction::new(&controls, 0.0, window, 0.5 * dt);
    let weight = |t: f64| mode.at(t);
    let d = gen.dim();
    let b = lowering_operator(d);
    let bdag = b.adjoint();

    let mut ev = Evolver::new(&gen);
    let mut y = vec![C64::new(0.0, 0.0); d * d];
    let mut ys: Vec<Vec<C64>> = Vec::new();
    let src = AdjointSource {
        operator: &b,
        weight: &weight,
    };
    ev.adjoint(&controls, Some(&src), &mut y, 0.0, window, dt, |_, v| {
        ys.push(v.to_vec())
    });
    ys.reverse();
    let coherence = inner(&y, &state.to_vec());

    let mut x = state.to_vec();
    let mut integrand = Vec::with_capacity(ys.len());
    let mut times = Vec::with_capacity(ys.len());
    ev.evolve(
        &controls,
        &mut x,
        0.0,
        window,
        dt,
        &mut StepAccumulators::default(),
        |t, v| {
            let rho = DMatrix::from_column_slice(d, d, v);
            let xb = &rho * &bdag;
            let k = integrand.len();
            integrand.push(inner(&ys[k], xb.as_slice()) * weight(t));
            times.push(t);
        },
    );
    let mut occ = C64::new(0.0, 0.0);
    for k in 1..integrand.len() {
        occ += (integrand[k - 1] + integrand[k]) * (0.5 * (times[k] - times[k - 1]));
    }
    Ok(PhotonModeState {
        occupation: 2.0 * occ.re,
        coherence,
    })
}

/// Stores the prepared state at the decoupling point for `storage`, then
/// releases it; fidelity of the emitted mode against the target photon state.
pub fn emission_efficiency(
    device: &Device,
    target: Target,
    pulse: &DrivePulse,
    storage: f64,
    coupled_flux: f64,
) -> Result<f64> {
    if !(storage >= 0.0) || !storage.is_finite() {
        return Err(Error::param("storage_time", "must be non-negative"));
    }
    let prepared = prepare(device, pulse)?;
    let dec = device.decoupling_flux()?;
    let stored = if storage > 0.0 {
        let hold = PulseSchedule::idle(dec, storage);
        let opts = RecordOptions {
            sample_interval: storage,
            flux_dephasing: false,
            ..RecordOptions::default()
        };
        run_schedule_from(device, &hold, &prepared, &opts)?.1
    } else {
        prepared
    };
    let mode = emitted_mode(device, &stored, coupled_flux)?;
    Ok(uhlmann(target.state(2).matrix(), mode.density().matrix()))
}

/// Dissipation channels that can be toggled for the loss budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channels {
    pub thermal: bool,
    pub leakage: bool,
    pub intrinsic_decay: bool,
    pub dephasing: bool,
    pub parasitic: bool,
}

impl Channels {
    pub const ALL: Channels = Channels {
        thermal: true,
        leakage: true,
        intrinsic_decay: true,
        dephasing: true,
        parasitic: true,
    };
    pub const NONE: Channels = Channels {
        thermal: false,
        leakage: false,
        intrinsic_decay: false,
        dephasing: false,
        parasitic: false,
    };

    pub const NAMES: [&'static str; 5] = ["thermal", "leakage", "intrinsic_decay", "dephasing", "parasitic"];

    fn only(k: usize) -> Channels {
        let mut c = Channels::NONE;
        *c.flag_mut(k) = true;
        c
    }

    fn flag_mut(&mut self, k: usize) -> &mut bool {
        match k {
            0 => &mut self.thermal,
            1 => &mut self.leakage,
            2 => &mut self.intrinsic_decay,
            3 => &mut self.dephasing,
            _ => &mut self.parasitic,
        }
    }

    /// Copy of `device` with the disabled channels removed. Leakage is
    /// removed by truncating to two levels.
    pub fn apply(&self, device: &Device) -> Device {
        let mut d = device.clone();
        let p = &mut d.transmon;
        if !self.thermal {
            p.t_eff = 0.0;
        }
        if !self.leakage {
            p.levels = 2;
        }
        if !self.intrinsic_decay {
            p.gamma1_intrinsic = 0.0;
        }
        if !self.dephasing {
            p.gammaphi_intrinsic = 0.0;
        }
        if !self.parasitic {
            p.gamma_excitation_line = 0.0;
        }
        d
    }
}

/// Fidelity deficit per channel, each measured with only that channel on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub storage: f64,
    /// (channel, deficit) pairs with nonzero deficit.
    pub items: Vec<(String, f64)>,
    /// Total deficit minus the sum of the items.
    pub remainder: f64,
    pub total: f64,
}

/// Emission fidelity for `target` after `storage` with the given channels,
/// recalibrating the preparation pulse for the modified device.
pub fn channel_fidelity(
    device: &Device,
    channels: Channels,
    target: Target,
    storage: f64,
    coupled_flux: f64,
) -> Result<f64> {
    let d = channels.apply(device);
    let pulse = preparation_pulse(&d, target)?;
    emission_efficiency(&d, target, &pulse, storage, coupled_flux)
}

pub fn loss_budget(device: &Device, target: Target, storage: f64, coupled_flux: f64) -> Result<LossBudget> {
    let active: Vec<usize> = (0..5)
        .filter(|&k| {
            let d = Channels::only(k).apply(device);
            d != Channels::NONE.apply(device)
        })
        .collect();
    let base = channel_fidelity(device, Channels::NONE, target, storage, coupled_flux)?;
    let all = if active.is_empty() {
        base
    } else {
        channel_fidelity(device, Channels::ALL, target, storage, coupled_flux)?
    };
    let deficits = active
        .par_iter()
        .map(|&k| channel_fidelity(device, Channels::only(k), target, storage, coupled_flux).map(|f| (k, base - f)))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(String, f64)> = deficits
        .into_iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(k, v)| (Channels::NAMES[k].to_string(), v))
        .collect();
    let total = (base - all).max(0.0);
    let remainder = total - items.iter().map(|(_, v)| v).sum::<f64>();
    Ok(LossBudget {
        storage,
        items,
        remainder,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub target: Target,
    pub prep_fidelity: f64,
    /// (storage time, emitted-state fidelity).
    pub emission: Vec<(f64, f64)>,
    pub budget: Option<LossBudget>,
}

/// Preparation and emission fidelities over a storage grid, optionally with
/// the loss budget at the longest storage time.
pub fn fidelity_report(
    device: &Device,
    target: Target,
    storages: &[f64],
    coupled_flux: f64,
    with_budget: bool,
) -> Result<FidelityReport> {
    let pulse = preparation_pulse(device, target)?;
    let prep_fidelity = preparation_fidelity(device, target, &pulse)?;
    let emission = storages
        .par_iter()
        .map(|&s| emission_efficiency(device, target, &pulse, s, coupled_flux).map(|f| (s, f)))
        .collect::<Result<Vec<_>>>()?;
    let budget = match (with_budget, storages.last()) {
        (true, Some(&s)) => Some(loss_budget(device, target, s, coupled_flux)?),
        _ => None,
    };
    Ok(FidelityReport {
        target,
        prep_fidelity,
        emission,
        budget,
    })
}
