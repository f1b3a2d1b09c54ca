//! Subcommand orchestration: runs an experiment from a configuration and
//! collects its CSV tables and summary in memory; the caller writes them.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{config_error, DecayProtocol, RunConfig, TargetShape};
use crate::constants::angular;
use crate::device::Device;
use crate::dynamics::{run_schedule, RecordOptions};
use crate::error::{Error, Result};
use crate::fidelity::{fidelity_report, Target};
use crate::io::{
    flux_curve_from_table, record_table, trajectory_table, wavepacket_from_table, wavepacket_table, Table,
};
use crate::manifest::{sha256_hex, RunManifest};
use crate::sequencer::{
    calibrate_pulse, free_decay_experiment, intrinsic_t1_experiment, intrinsic_t2_experiment, jitter_figure,
    rabi_experiment, triggered_emission, two_level_rates, Excitation, StorageSweep,
};
use crate::shaping::{
    emulate_paper_edges, envelope_asymmetry, flux_from_rate, rate_from_target, verify_shape, RateInverter, Wavepacket,
};
use crate::spectroscopy::{
    fit_flux_curve, fit_trace, infer_line_length, landmark_guess, on_off_ratio, synthesize_trace_stream, FluxFitParams,
};

const NS: f64 = 1e-9;
const MHZ: f64 = 2.0 * PI * 1e6;

/// Generic start of the global flux fit before the landmark refinement.
pub const FIT_START: FluxFitParams = FluxFitParams {
    ic1: 25e-9,
    ic2: 50e-9,
    c_sq: 30e-15,
    c_s: 30e-15,
    phi_off: 0.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SpectroSweep,
    FitCurve,
    Rabi,
    Decay,
    Triggered,
    Shaped,
    InvertShape,
    FidelityTable,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::SpectroSweep,
        Command::FitCurve,
        Command::Rabi,
        Command::Decay,
        Command::Triggered,
        Command::Shaped,
        Command::InvertShape,
        Command::FidelityTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SpectroSweep => "spectro-sweep",
            Command::FitCurve => "fit-curve",
            Command::Rabi => "rabi",
            Command::Decay => "decay",
            Command::Triggered => "triggered",
            Command::Shaped => "shaped",
            Command::InvertShape => "invert-shape",
            Command::FidelityTable => "fidelity-table",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Files of one run, in the order they are written.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
    pub steps: Option<usize>,
}

impl Outputs {
    fn table(&mut self, name: &str, table: Table) {
        self.tables.push((name.to_string(), table));
    }

    /// (file name, contents) of every output, summary last.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = self.tables.iter().map(|(n, t)| (n.clone(), t.to_bytes())).collect();
        let mut summary = serde_json::to_vec_pretty(&self.summary).expect("summary serializes");
        summary.push(b'\n');
        files.push(("summary.json".into(), summary));
        files
    }
}

fn ns(t: f64) -> f64 {
    t / NS
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outputs> {
    let device = cfg.device()?;
    let ex = &cfg.experiment;
    match command {
        Command::SpectroSweep => spectro_sweep(&device, cfg, cfg.require(command.name(), &ex.spectro_sweep)?),
        Command::FitCurve => fit_curve(&device, cfg, cfg.require(command.name(), &ex.fit_curve)?),
        Command::Rabi => rabi(&device, cfg.require(command.name(), &ex.rabi)?),
        Command::Decay => decay(&device, cfg.require(command.name(), &ex.decay)?),
        Command::Triggered => triggered(&device, cfg.require(command.name(), &ex.triggered)?),
        Command::Shaped => shaped(&device, cfg.require(command.name(), &ex.shaped)?),
        Command::InvertShape => invert_shape(&device, cfg, cfg.require(command.name(), &ex.invert_shape)?),
        Command::FidelityTable => fidelity_table(&device, cfg.require(command.name(), &ex.fidelity_table)?),
    }
}

/// Runs `command` and writes its outputs and manifest into `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let clock = Instant::now();
    let outputs = execute(command, cfg)?;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new(command.name(), &cfg.canonical());
    for (name, bytes) in outputs.files() {
        std::fs::write(out.join(&name), &bytes)?;
        manifest.outputs.insert(name, sha256_hex(&bytes));
    }
    manifest.steps = outputs.steps;
    manifest.wall_clock_s = clock.elapsed().as_secs_f64();
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    std::fs::write(out.join("manifest.json"), text)?;
    Ok(manifest)
}

/// Machine-readable error record.
pub fn error_record(err: &Error) -> Value {
    let mut v = json!({ "error": err.kind(), "message": err.to_string() });
    if let Error::Config { path, .. } = err {
        v["path"] = json!(path);
    }
    v
}

fn device_summary(device: &Device) -> Value {
    let (peak_flux, peak) = device.gamma1_peak();
    let dec = device.decoupling_flux().ok();
    let length = dec.and_then(|f| infer_line_length(f, device.transmon.omega01, device.boundary.line.v).ok());
    json!({
        "gamma1_max_mhz": peak / MHZ,
        "gamma1_max_flux": peak_flux,
        "decoupling_flux": dec,
        "on_off_ratio": on_off_ratio(device, 1e-3),
        "line_length_mm": length.map(|l| l * 1e3),
    })
}

fn spectro_sweep(device: &Device, cfg: &RunConfig, ex: &crate::config::SpectroSweep) -> Result<Outputs> {
    let path = "experiment.spectro-sweep";
    let fluxes = ex.flux.values(&format!("{path}.flux"))?;
    if ex.detuning_points < 4 || !(ex.span_mhz > 0.0) {
        return Err(config_error(path, "need span_mhz > 0 and detuning_points ≥ 4"));
    }
    let half = 0.5 * ex.span_mhz * MHZ;
    let detunings = uniform(-half, half, ex.detuning_points);
    let results = fluxes
        .par_iter()
        .enumerate()
        .map(|(k, &f)| {
            let trace = synthesize_trace_stream(device, f, &detunings, ex.noise, cfg.seed, k as u64)?;
            let fit = fit_trace(&trace)?;
            Ok((trace, fit))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweep = Table::new(&[
        "flux",
        "gamma1_model_mhz",
        "gamma1_fit_mhz",
        "gamma2_fit_mhz",
        "f01_fit_ghz",
        "degenerate",
    ]);
    let mut traces = Table::new(&["flux", "detuning_mhz", "re", "im"]);
    for (trace, fit) in &results {
        sweep.push(vec![
            trace.flux,
            device.gamma1(trace.flux) / MHZ,
            fit.get("gamma1").unwrap() / MHZ,
            fit.get("gamma2").unwrap() / MHZ,
            fit.get("omega01").unwrap() / angular(1e9),
            if fit.degenerate { 1.0 } else { 0.0 },
        ]);
        for (d, r) in trace.detunings.iter().zip(&trace.r_values) {
            traces.push(vec![trace.flux, d / MHZ, r.re, r.im]);
        }
    }
    let fitted: Vec<(f64, f64)> = results
        .iter()
        .filter(|(_, f)| !f.degenerate)
        .map(|(t, f)| (t.flux, f.get("gamma1").unwrap()))
        .collect();
    let best = fitted
        .iter()
        .cloned()
        .fold((f64::NAN, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mut out = Outputs::default();
    out.table("sweep.csv", sweep);
    out.table("traces.csv", traces);
    out.summary = json!({
        "command": "spectro-sweep",
        "device": device_summary(device),
        "traces": results.len(),
        "degenerate_traces": results.len() - fitted.len(),
        "fitted_gamma1_max_mhz": best.1 / MHZ,
        "fitted_gamma1_max_flux": best.0,
    });
    Ok(out)
}

fn fit_curve(device: &Device, cfg: &RunConfig, ex: &crate::config::FitCurve) -> Result<Outputs> {
    let path = "experiment.fit-curve";
    let synthetic = ex.input.is_none();
    let points = match &ex.input {
        Some(p) => flux_curve_from_table(&Table::read(p)?)?,
        None => {
            if ex.points < 10 || !(ex.noise >= 0.0) {
                return Err(config_error(path, "need points ≥ 10 and noise ≥ 0"));
            }
            let mut curve = device.flux_curve(1.0 / (ex.points - 1) as f64);
            if ex.noise > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let normal = Normal::new(0.0, ex.noise).map_err(|e| config_error(path, e.to_string()))?;
                for p in &mut curve {
                    p.1 *= 1.0 + normal.sample(&mut rng);
                }
            }
            curve
        }
    };
    let base = device.boundary;
    let start = landmark_guess(&points, &base, FIT_START);
    let fit = fit_flux_curve(&points, &base, start, ex.method.into())?;
    let params = FluxFitParams::from_slice(&fit.values);
    let fitted = params.apply(&base);

    let mut curve = Table::new(&["flux", "gamma1_mhz", "model_mhz"]);
    for &(f, g) in &points {
        let m = fitted.emission_rate(crate::boundary::FluxBias(f)).unwrap_or(0.0);
        curve.push(vec![f, g / MHZ, m / MHZ]);
    }
    let mut parameters = serde_json::Map::new();
    for (k, name) in FluxFitParams::NAMES.iter().enumerate() {
        parameters.insert(
            name.to_string(),
            json!({ "value": fit.values[k], "uncertainty": fit.uncertainties[k] }),
        );
    }
    let mut summary = json!({
        "command": "fit-curve",
        "method": ex.method,
        "points": points.len(),
        "parameters": parameters,
        "residual_norm_mhz": fit.residual_norm / MHZ,
        "converged": fit.converged,
        "decoupling_flux": fitted.decoupling_flux(),
    });
    if synthetic {
        let truth = FluxFitParams::from_model(&base).canonical();
        let t = [truth.ic1, truth.ic2, truth.c_sq, truth.c_s, truth.phi_off];
        let mut errors = serde_json::Map::new();
        for (k, name) in FluxFitParams::NAMES.iter().enumerate() {
            errors.insert(name.to_string(), json!(((fit.values[k] - t[k]) / t[k]).abs()));
        }
        summary["relative_error"] = Value::Object(errors);
        summary["noise"] = json!(ex.noise);
    }
    let mut out = Outputs::default();
    out.table("curve.csv", curve);
    out.summary = summary;
    Ok(out)
}

fn rabi(device: &Device, ex: &crate::config::Rabi) -> Result<Outputs> {
    let durations: Vec<f64> = ex
        .durations_ns
        .values("experiment.rabi.durations_ns")?
        .iter()
        .map(|d| d * NS)
        .collect();
    let r = rabi_experiment(device, ex.flux, ex.drive_mhz * MHZ, &durations)?;
    let mut table = Table::new(&["duration_ns", "i", "q", "power_per_ns"]);
    for k in 0..r.durations.len() {
        table.push(vec![ns(r.durations[k]), r.i[k], r.q[k], r.power[k] * NS]);
    }
    let rates = two_level_rates(device, ex.flux);
    let mut out = Outputs::default();
    out.table("rabi.csv", table);
    out.summary = json!({
        "command": "rabi",
        "flux": ex.flux,
        "drive_mhz": ex.drive_mhz,
        "t_r_ns": ns(r.t_r.value),
        "t_r_uncertainty_ns": ns(r.t_r.uncertainty),
        "phase_offset_pi": r.phase_offset.map(|p| p / PI),
        "averaging_window_ns": ns(r.window),
        "closed_form_t_r_ns": ns(1.0 / rates.gamma_rabi),
    });
    Ok(out)
}

fn sweep_table(s: &StorageSweep) -> Table {
    let mut t = Table::new(&["delay_ns", "signal"]);
    for (d, v) in s.delays.iter().zip(&s.signal) {
        t.push(vec![ns(*d), *v]);
    }
    t
}

fn decay(device: &Device, ex: &crate::config::Decay) -> Result<Outputs> {
    let mut out = Outputs::default();
    let half_pi = calibrate_pulse(device, Excitation::HalfPi)?;
    let delays = || -> Result<Vec<f64>> {
        Ok(ex
            .delays_ns
            .values("experiment.decay.delays_ns")?
            .iter()
            .map(|d| d * NS)
            .collect())
    };
    match ex.protocol {
        DecayProtocol::FreeInduction => {
            let r = free_decay_experiment(device, ex.flux, &half_pi)?;
            out.steps = Some(r.record.steps);
            out.table("record.csv", record_table(&r.record));
            out.summary = json!({
                "command": "decay",
                "protocol": ex.protocol,
                "flux": ex.flux,
                "t2_star_ns": ns(r.t2_star.value),
                "t2_star_uncertainty_ns": ns(r.t2_star.uncertainty),
                "closed_form_t2_ns": ns(1.0 / two_level_rates(device, ex.flux).gamma2),
            });
        }
        DecayProtocol::IntrinsicT1 => {
            let pi = calibrate_pulse(device, Excitation::Pi)?;
            let s = intrinsic_t1_experiment(device, &pi, &half_pi, &delays()?, ex.coupled_flux)?;
            let (t1_jit, ratio) = jitter_figure(s.figure.value, ex.jitter_t2_ns * NS, ex.jitter_gamma_phi_mhz * MHZ)?;
            out.table("storage.csv", sweep_table(&s));
            out.summary = json!({
                "command": "decay",
                "protocol": ex.protocol,
                "t1_intrinsic_ns": ns(s.figure.value),
                "t1_intrinsic_uncertainty_ns": ns(s.figure.uncertainty),
                "t1_jitter_ns": ns(t1_jit),
                "storage_jitter_ratio": ratio,
            });
        }
        DecayProtocol::IntrinsicT2 => {
            let delays = delays()?;
            let t1 = match ex.t1_ns {
                Some(t) => t * NS,
                None => {
                    let pi = calibrate_pulse(device, Excitation::Pi)?;
                    intrinsic_t1_experiment(device, &pi, &half_pi, &delays, ex.coupled_flux)?
                        .figure
                        .value
                }
            };
            let s = intrinsic_t2_experiment(device, &half_pi, &delays, t1, ex.coupled_flux)?;
            out.table("storage.csv", sweep_table(&s));
            out.summary = json!({
                "command": "decay",
                "protocol": ex.protocol,
                "t1_ns": ns(t1),
                "t2_intrinsic_ns": ns(s.figure.value),
                "t2_intrinsic_uncertainty_ns": ns(s.figure.uncertainty),
                "t_phi_ns": s.t_phi.map(ns),
            });
        }
    }
    Ok(out)
}

fn triggered(device: &Device, ex: &crate::config::Triggered) -> Result<Outputs> {
    let pulse = if ex.excite {
        Some(calibrate_pulse(device, Excitation::Pi)?)
    } else {
        None
    };
    let r = triggered_emission(device, ex.storage_ns * NS, pulse.as_ref(), ex.coupled_flux)?;
    let mut out = Outputs {
        steps: Some(r.record.steps),
        ..Outputs::default()
    };
    out.table("record.csv", record_table(&r.record));
    out.summary = json!({
        "command": "triggered",
        "storage_ns": ex.storage_ns,
        "release_ns": ns(r.release),
        "burst_photons": r.burst_photons,
        "emitted_photons": r.record.emitted_photons,
        "intrinsic_loss": r.record.intrinsic_loss,
        "tail_tau_ns": r.tail_fit.as_ref().and_then(|f| f.get("tau")).map(ns),
    });
    Ok(out)
}

fn shaped(device: &Device, ex: &crate::config::Shaped) -> Result<Outputs> {
    let pulse = calibrate_pulse(device, Excitation::Pi)?;
    let edge = ex.edge_ns.map_or(ex.shape.default_edge(), |e| e * NS);
    let (schedule, traj) = emulate_paper_edges(device, ex.shape, edge, &pulse, ex.coupled_flux, ex.tail_ns * NS)?;
    let mut record = run_schedule(device, &schedule, &RecordOptions::default())?;
    let release = schedule
        .markers
        .iter()
        .find(|m| m.label == "release")
        .map_or(0.0, |m| m.time);
    let idx: Vec<usize> = (0..record.len()).filter(|&k| record.t[k] >= release).collect();
    let i: Vec<f64> = idx.iter().map(|&k| record.i[k]).collect();
    let q: Vec<f64> = idx.iter().map(|&k| record.q[k]).collect();
    record.rotate(crate::dynamics::principal_angle(&i, &q));
    let asymmetry = envelope_asymmetry(&record.t, &record.i, release);
    let mut out = Outputs {
        steps: Some(record.steps),
        ..Outputs::default()
    };
    out.table("trajectory.csv", trajectory_table(&traj));
    out.table("record.csv", record_table(&record));
    out.summary = json!({
        "command": "shaped",
        "shape": ex.shape,
        "edge_ns": ns(edge),
        "release_ns": ns(release),
        "emitted_photons": record.emitted_photons,
        "envelope_asymmetry": asymmetry,
    });
    Ok(out)
}

fn target_packet(ex: &crate::config::InvertShape) -> Result<Wavepacket> {
    if let Some(p) = &ex.input {
        return wavepacket_from_table(&Table::read(p)?);
    }
    let path = "experiment.invert-shape";
    if ex.points < 2 || !(ex.dt_ns > 0.0) {
        return Err(config_error(path, "need points ≥ 2 and dt_ns > 0"));
    }
    let dt = ex.dt_ns * NS;
    match ex.shape {
        TargetShape::Sech => Wavepacket::sech(ex.width_ns * NS, ex.center_ns * NS, ex.eta, dt, ex.points),
        TargetShape::Exponential => Wavepacket::exponential(ex.rate_mhz * MHZ, dt, ex.points),
        TargetShape::RisingExponential => Wavepacket::rising_exponential(ex.rate_mhz * MHZ, dt, ex.points),
    }
    .map_err(|e| config_error(path, e.to_string()))
}

fn invert_shape(device: &Device, cfg: &RunConfig, ex: &crate::config::InvertShape) -> Result<Outputs> {
    let target = target_packet(ex)?;
    let inverter = RateInverter::new(device, ex.branch)?;
    let gamma_max = ex.gamma_max_mhz.map_or(inverter.max_rate(), |g| g * MHZ);
    let rates = rate_from_target(&target, gamma_max, cfg.numerics.clamp_threshold)?;
    let traj = flux_from_rate(device, &rates, ex.branch)?;

    let mut rate_table = Table::new(&["t_ns", "gamma1_mhz"]);
    for (t, g) in rates.t.iter().zip(&rates.gamma1) {
        rate_table.push(vec![ns(*t), g / MHZ]);
    }
    let mut out = Outputs::default();
    out.table("target.csv", wavepacket_table(&target));
    out.table("rate.csv", rate_table);
    out.table("trajectory.csv", trajectory_table(&traj));
    out.summary = json!({
        "command": "invert-shape",
        "branch": ex.branch,
        "target_norm": target.norm(),
        "gamma_max_mhz": gamma_max / MHZ,
        "clamped_fraction": rates.clamped_fraction,
    });
    if ex.verify {
        let mut d = device.clone();
        if ex.ideal {
            d.transmon = d.transmon.without_dissipation();
        }
        let check = verify_shape(&d, &traj, &target)?;
        out.steps = Some(check.record.steps);
        out.table("achieved.csv", wavepacket_table(&check.achieved));
        out.summary["l2_error"] = json!(check.l2_error);
        out.summary["achieved_norm"] = json!(check.achieved.norm());
    }
    Ok(out)
}

fn fidelity_table(device: &Device, ex: &crate::config::FidelityTable) -> Result<Outputs> {
    let path = "experiment.fidelity-table";
    if ex.storages_ns.is_empty() || ex.storages_ns.iter().any(|s| !(*s >= 0.0)) {
        return Err(config_error(
            path,
            "storages_ns must be a non-empty list of non-negative times",
        ));
    }
    let storages: Vec<f64> = ex.storages_ns.iter().map(|s| s * NS).collect();
    let reports = Target::ALL
        .iter()
        .map(|&t| fidelity_report(device, t, &storages, ex.coupled_flux, ex.budget))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["storage_ns", "fock", "superposition"]);
    for (k, s) in ex.storages_ns.iter().enumerate() {
        table.push(vec![*s, reports[0].emission[k].1, reports[1].emission[k].1]);
    }
    let mut summary = json!({
        "command": "fidelity-table",
        "coupled_flux": ex.coupled_flux,
    });
    for r in &reports {
        let mut entry = json!({
            "prep_fidelity": r.prep_fidelity,
            "emission": ex
                .storages_ns
                .iter()
                .zip(&r.emission)
                .map(|(s, (_, f))| json!({ "storage_ns": s, "fidelity": f }))
                .collect::<Vec<_>>(),
        });
        if let Some(b) = &r.budget {
            entry["loss_budget"] = json!({
                "storage_ns": ex.storages_ns[ex.storages_ns.len() - 1],
                "total": b.total,
                "remainder": b.remainder,
                "items": b.items.iter().map(|(n, v)| json!({ "channel": n, "deficit": v })).collect::<Vec<_>>(),
            });
        }
        summary[r.target.to_string()] = entry;
    }
    let mut out = Outputs::default();
    out.table("fidelity.csv", table);
    out.summary = summary;
    Ok(out)
}
