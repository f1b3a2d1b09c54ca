//! Acceptance criteria. Each test writes one PASS/FAIL line straight to
//! stderr (bypassing output capture) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use photon_source::app::{execute, Command};
use photon_source::config::parse_config;
use photon_source::constants::angular;
use photon_source::density::DensityMatrix;
use photon_source::device::Device;
use photon_source::dynamics::{run_schedule_from, RecordOptions};
use photon_source::fidelity::{fidelity_report, Target};
use photon_source::schedule::PulseSchedule;
use photon_source::sequencer::{calibrate_pulse, free_decay_experiment, jitter_figure, rabi_experiment, Excitation};
use photon_source::shaping::{flux_from_rate, rate_from_target, verify_shape, Branch, RateInverter, Wavepacket};
use photon_source::spectroscopy::{infer_line_length, on_off_ratio, FluxFitParams};

const MHZ: f64 = 2.0 * std::f64::consts::PI * 1e6;

struct Check {
    failures: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check { failures: Vec::new() }
    }

    fn within(&mut self, what: &str, value: f64, target: f64, tol: f64) {
        let ok = (value - target).abs() <= tol;
        self.note(ok, format!("{what} = {value:.5} (want {target} ± {tol})"));
    }

    fn at_least(&mut self, what: &str, value: f64, min: f64) {
        self.note(value >= min, format!("{what} = {value:.4e} (want ≥ {min})"));
    }

    fn below(&mut self, what: &str, value: f64, max: f64) {
        self.note(value < max, format!("{what} = {value:.3e} (want < {max:e})"));
    }

    fn note(&mut self, ok: bool, line: String) {
        report_detail(&format!("{} {line}", if ok { "  ok " } else { "  BAD" }));
        if !ok {
            self.failures.push(line);
        }
    }

    fn finish(self, n: usize, title: &str, elapsed: Duration, budget: Duration) {
        let mut failures = self.failures;
        if elapsed > budget {
            failures.push(format!(
                "runtime {:.2} s over budget {:.0} s",
                elapsed.as_secs_f64(),
                budget.as_secs_f64()
            ));
        }
        let status = if failures.is_empty() { "PASS" } else { "FAIL" };
        report_detail(&format!(
            "{status} criterion {n}: {title} ({:.2} s)",
            elapsed.as_secs_f64()
        ));
        assert!(failures.is_empty(), "criterion {n} failed: {}", failures.join("; "));
    }
}

fn report_detail(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn criterion_1_flux_curve() {
    let clock = Instant::now();
    let d = Device::preset("paper2017").unwrap();
    let mut c = Check::new();
    let (peak_flux, peak) = d.gamma1_peak();
    c.within("Γ₁,max/2π (MHz)", peak / MHZ, 1.9, 0.15);
    c.within(
        "flux of the maximum (distance to integer)",
        peak_flux.min(1.0 - peak_flux),
        0.0,
        0.05,
    );
    let dec = d.decoupling_flux().unwrap();
    c.within("first zero (Φ₀)", dec, 0.39, 0.015);
    // The second zero of the period is the mirror image; check it is a zero of the curve.
    let second = d
        .flux_curve(1e-3)
        .into_iter()
        .filter(|p| p.0 > 0.5)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    c.within("second zero (Φ₀)", second.0, 0.61, 0.015);
    c.at_least("on/off ratio", on_off_ratio(&d, 1e-3), 35.0);
    c.finish(1, "flux curve", clock.elapsed(), secs(1));
}

fn fit_errors(seed: u64, noise: f64) -> [f64; 5] {
    let text = format!("seed = {seed}\n[experiment.fit-curve]\npoints = 401\nnoise = {noise}\nmethod = \"nm\"\n");
    let out = execute(Command::FitCurve, &parse_config(&text).unwrap()).unwrap();
    FluxFitParams::NAMES.map(|n| out.summary["relative_error"][n].as_f64().unwrap())
}

#[test]
fn criterion_2_global_fit_round_trip() {
    let clock = Instant::now();
    let mut c = Check::new();
    let clean = fit_errors(0, 0.0);
    for (name, e) in FluxFitParams::NAMES.iter().zip(clean) {
        c.within(&format!("noiseless relative error {name}"), e, 0.0, 0.01);
    }
    let runs: Vec<[f64; 5]> = (1..=20).map(|s| fit_errors(s, 0.05)).collect();
    for (k, name) in FluxFitParams::NAMES.iter().enumerate() {
        let mut v: Vec<f64> = runs.iter().map(|r| r[k]).collect();
        v.sort_by(f64::total_cmp);
        let median = 0.5 * (v[9] + v[10]);
        c.within(&format!("5 % noise median relative error {name}"), median, 0.0, 0.08);
    }
    c.finish(2, "global fit round-trip", clock.elapsed(), secs(30));
}

#[test]
fn criterion_3_line_length() {
    let clock = Instant::now();
    let d = Device::paper2017();
    let mut c = Check::new();
    let l = infer_line_length(0.39, d.transmon.omega01, d.boundary.line.v).unwrap();
    c.within("L (mm) from 0.39 Φ₀", l * 1e3, 9.49, 0.01);
    let l = infer_line_length(d.decoupling_flux().unwrap(), d.transmon.omega01, d.boundary.line.v).unwrap();
    c.within("L (mm) from the model's decoupling flux", l * 1e3, 9.49, 0.01);
    c.finish(3, "line-length inference", clock.elapsed(), secs(1));
}

fn rabi_durations(stop: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| stop * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn criterion_4_dynamics() {
    let clock = Instant::now();
    let d = Device::paper2017();
    let mut c = Check::new();
    let drive = angular(10e6);
    let half_pi = calibrate_pulse(&d, Excitation::HalfPi).unwrap();
    let (coupled, decoupled) = (0.0, -0.45);

    let t2_c = free_decay_experiment(&d, coupled, &half_pi).unwrap().t2_star.value;
    let t2_d = free_decay_experiment(&d, decoupled, &half_pi).unwrap().t2_star.value;
    let tr_c = rabi_experiment(&d, coupled, drive, &rabi_durations(400e-9, 201))
        .unwrap()
        .t_r
        .value;
    let tr_d = rabi_experiment(&d, decoupled, drive, &rabi_durations(1500e-9, 301))
        .unwrap()
        .t_r
        .value;

    c.within("T₂* at maximum coupling (ns)", t2_c * 1e9, 81.0, 0.25 * 81.0);
    c.within("T_R at maximum coupling (ns)", tr_c * 1e9, 110.0, 0.25 * 110.0);
    c.within("T_R ratio −0.45 Φ₀ / 0", tr_d / tr_c, 4.3, 0.2 * 4.3);
    c.within("T₂* ratio −0.45 Φ₀ / 0", t2_d / t2_c, 4.6, 0.2 * 4.6);
    c.finish(4, "coherence and Rabi times", clock.elapsed(), secs(120));
}

#[test]
fn criterion_5_rabi_phase_offset() {
    let clock = Instant::now();
    let d = Device::paper2017();
    let mut c = Check::new();
    let r = rabi_experiment(&d, -0.45, angular(10e6), &rabi_durations(1500e-9, 301)).unwrap();
    let offset = r.phase_offset.expect("power oscillation fitted") / std::f64::consts::PI;
    c.within("power/quadrature phase offset (π)", offset, 0.5, 0.02);
    c.within("inside the measured band (π)", offset, 0.58, 0.08);
    c.finish(5, "Rabi phase offset", clock.elapsed(), secs(60));
}

#[test]
fn criterion_6_fidelity_table() {
    let clock = Instant::now();
    let d = Device::paper2017();
    let mut c = Check::new();
    let p = &d.transmon;
    c.within("T₁,ᵢ (µs)", 1e6 / p.gamma1_intrinsic, 2.86, 1e-9);
    c.within(
        "T₂,ᵢ* (µs)",
        1e6 / (p.gammaphi_intrinsic + 0.5 * p.gamma1_intrinsic),
        1.33,
        1e-9,
    );
    c.within("T_eff (mK)", p.t_eff * 1e3, 90.0, 1e-9);
    c.within("levels", p.levels as f64, 3.0, 0.0);
    let storages = [100e-9, 1e-6];
    let targets = [(Target::Fock, [0.90, 0.74]), (Target::Superposition, [0.88, 0.73])];
    for (target, expected) in targets {
        let r = fidelity_report(&d, target, &storages, 0.0, false).unwrap();
        c.within(&format!("{target} preparation fidelity"), r.prep_fidelity, 0.92, 0.04);
        for ((s, f), want) in r.emission.iter().zip(expected) {
            c.within(
                &format!("{target} emission fidelity after {:.0} ns", s * 1e9),
                *f,
                want,
                0.04,
            );
        }
    }
    c.finish(6, "fidelity table", clock.elapsed(), secs(120));
}

#[test]
fn criterion_7_storage_jitter() {
    let clock = Instant::now();
    let mut c = Check::new();
    let (t1_jit, ratio) = jitter_figure(2.86e-6, 81e-9, angular(0.7e6)).unwrap();
    c.within("T₁,jit (ns)", t1_jit * 1e9, 63.0, 1.0);
    c.within("T₁,ᵢ / T₁,jit", ratio, 47.0, 2.0);
    c.finish(7, "storage/jitter figure", clock.elapsed(), secs(1));
}

fn cold(levels: usize) -> Device {
    let mut d = Device::paper2017();
    d.transmon.t_eff = 0.0;
    d.transmon.levels = levels;
    d
}

#[test]
fn criterion_8_property_suites() {
    let clock = Instant::now();
    let mut c = Check::new();

    // Trace preservation over 5 µs of driven, dissipative, thermal evolution.
    let d = Device::paper2017();
    let pulse = calibrate_pulse(&d, Excitation::Pi).unwrap();
    let s = PulseSchedule::idle(0.2, 5e-6).with_drive(pulse);
    let p = &d.transmon;
    let init = DensityMatrix::thermal(p.levels, p.omega01, p.alpha, p.t_eff);
    let opts = RecordOptions {
        sample_interval: 10e-9,
        ..RecordOptions::default()
    };
    let (rec, fin) = run_schedule_from(&d, &s, &init, &opts).unwrap();
    let worst = rec
        .populations
        .iter()
        .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    c.below("max |Tr ρ − 1| over 5 µs", worst, 1e-8);
    c.below(
        "min eigenvalue magnitude if negative",
        (-fin.min_eigenvalue()).max(0.0),
        1e-8,
    );

    // Photon bookkeeping from |1⟩ at zero temperature, undriven.
    let d = cold(3);
    let (rec, fin) =
        run_schedule_from(&d, &PulseSchedule::idle(0.0, 1e-6), &DensityMatrix::basis(3, 1), &opts).unwrap();
    let left: f64 = fin.populations().iter().enumerate().map(|(j, p)| j as f64 * p).sum();
    c.below(
        "photon accounting error",
        (rec.emitted_photons + rec.intrinsic_loss + left - 1.0).abs(),
        1e-6,
    );

    // Two-level decay against e^{−Γt}.
    let mut d = cold(2);
    d.transmon = d.transmon.without_dissipation();
    let g = d.gamma1(0.0);
    let opts1 = RecordOptions {
        sample_interval: 1e-9,
        ..RecordOptions::default()
    };
    let (rec, _) = run_schedule_from(
        &d,
        &PulseSchedule::idle(0.0, 400e-9),
        &DensityMatrix::basis(2, 1),
        &opts1,
    )
    .unwrap();
    let worst = rec
        .t
        .iter()
        .zip(&rec.populations)
        .map(|(t, p)| (p[1] - (-g * t).exp()).abs())
        .fold(0.0, f64::max);
    c.below("two-level decay deviation", worst, 1e-6);

    // Shaping round trip for a feasible target.
    let dev = Device::paper2017();
    let inv = RateInverter::new(&dev, Branch::Positive).unwrap();
    let target = Wavepacket::sech(250e-9, 1500e-9, 0.95, 2e-9, 1501).unwrap();
    let rates = rate_from_target(&target, inv.max_rate(), 0.05).unwrap();
    let peak = rates.gamma1.iter().cloned().fold(0.0, f64::max);
    c.below("target peak rate / Γ₁,max", peak / inv.max_rate(), 0.8);
    let traj = flux_from_rate(&dev, &rates, Branch::Positive).unwrap();
    let mut ideal = dev.clone();
    ideal.transmon = ideal.transmon.without_dissipation();
    c.below(
        "shaping round-trip L2 error",
        verify_shape(&ideal, &traj, &target).unwrap().l2_error,
        1e-3,
    );

    // Bisection inversion identity.
    let worst = (1..100)
        .map(|k| {
            let r = inv.max_rate() * k as f64 / 100.0;
            (dev.gamma1(inv.flux(r).unwrap()) / r - 1.0).abs()
        })
        .fold(0.0, f64::max);
    c.below("inversion identity relative error", worst, 1e-9);

    // Determinism across repeated runs and thread counts.
    let cfg = parse_config(
        "seed = 11\n[experiment.spectro-sweep]\nnoise = 0.05\n[experiment.fit-curve]\nnoise = 0.05\npoints = 201\n",
    )
    .unwrap();
    let files = |threads: usize, cmd: Command| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| execute(cmd, &cfg).unwrap().files())
    };
    for cmd in [Command::SpectroSweep, Command::FitCurve] {
        let a = files(1, cmd);
        let same = a == files(1, cmd) && a == files(4, cmd);
        c.note(
            same,
            format!("{cmd} outputs identical across runs and 1/4 threads: {same}"),
        );
    }
    c.finish(8, "property suites", clock.elapsed(), secs(120));
}
