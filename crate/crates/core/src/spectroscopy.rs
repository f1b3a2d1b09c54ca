//! Weak-probe reflection spectroscopy: synthetic traces, per-trace Lorentzian
//! fits, the global Γ₁(Φ) fit, and line-length inference.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryModel, FluxBias};
use crate::device::Device;
use crate::error::{Error, Result};
use crate::fit::{least_squares, FitResult, Method, Options};

/// r = −1 + Γ₁/(Γ₂ + iδω).
pub fn reflection_coefficient(gamma1: f64, gamma2: f64, delta_omega: f64) -> Result<Complex64> {
    if !(gamma1 >= 0.0) || !(gamma2 >= 0.5 * gamma1) {
        return Err(Error::param(
            "gamma2",
            format!("need Γ₂ ≥ Γ₁/2 ≥ 0, got Γ₁ = {gamma1:e}, Γ₂ = {gamma2:e}"),
        ));
    }
    if gamma1 == 0.0 {
        return Ok(Complex64::new(-1.0, 0.0));
    }
    Ok(Complex64::new(-1.0, 0.0) + gamma1 / Complex64::new(gamma2, delta_omega))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTrace {
    pub flux: f64,
    /// Probe detuning from `omega_ref` (rad/s), strictly increasing.
    pub detunings: Vec<f64>,
    pub r_values: Vec<Complex64>,
    /// Frequency the detunings are measured from (rad/s).
    pub omega_ref: f64,
    pub noise_seed: u64,
    pub noise_stream: u64,
    /// Standard deviation of each quadrature of the added noise.
    pub noise_sigma: f64,
}

impl ReflectionTrace {
    pub fn validate(&self) -> Result<()> {
        if self.detunings.len() != self.r_values.len() {
            return Err(Error::Dimension {
                expected: self.detunings.len(),
                found: self.r_values.len(),
            });
        }
        if self.detunings.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("detunings", "grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// Linewidth Γ₂ = Γ₁/2 + Γ_φ seen by a weak probe at `flux`.
pub fn probe_linewidth(device: &Device, flux: f64) -> f64 {
    0.5 * device.gamma1(flux) + device.transmon.gammaphi_total(flux)
}

pub fn synthesize_trace(
    device: &Device,
    flux: f64,
    detunings: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<ReflectionTrace> {
    synthesize_trace_stream(device, flux, detunings, noise_sigma, seed, 0)
}

/// As [`synthesize_trace`], drawing the noise from stream `stream` of the
/// generator seeded with `seed`, so that traces of one sweep are independent.
pub fn synthesize_trace_stream(
    device: &Device,
    flux: f64,
    detunings: &[f64],
    noise_sigma: f64,
    seed: u64,
    stream: u64,
) -> Result<ReflectionTrace> {
    if detunings.is_empty() {
        return Err(Error::param("detunings", "grid is empty"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::param("noise_sigma", "must be non-negative"));
    }
    let g1 = device.boundary.emission_rate(FluxBias(flux))?;
    let g2 = 0.5 * g1 + device.transmon.gammaphi_total(flux);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let r_values = detunings
        .iter()
        .map(|&d| {
            let r = reflection_coefficient(g1, g2, d)?;
            if noise_sigma > 0.0 {
                Ok(r + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            } else {
                Ok(r)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = ReflectionTrace {
        flux,
        detunings: detunings.to_vec(),
        r_values,
        omega_ref: device.transmon.omega01,
        noise_seed: seed,
        noise_stream: stream,
        noise_sigma,
    };
    trace.validate()?;
    Ok(trace)
}

/// Fits Γ₁, Γ₂ and the resonance ω₀₁ to a trace (real and imaginary parts
/// jointly). A trace without a resolvable resonance returns a degenerate
/// result with Γ₁ = 0.
pub fn fit_trace(trace: &ReflectionTrace) -> Result<FitResult> {
    trace.validate()?;
    let n = trace.detunings.len();
    if n < 4 {
        return Err(Error::Fit("need at least 4 points".into()));
    }
    let names = ["gamma1", "gamma2", "omega01"];
    let z: Vec<Complex64> = trace.r_values.iter().map(|r| r + 1.0).collect();
    let peak = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = 5.0 * trace.noise_sigma + 1e-9;
    if peak < floor {
        return Ok(FitResult {
            names: names.iter().map(|s| s.to_string()).collect(),
            values: vec![0.0, f64::NAN, trace.omega_ref],
            uncertainties: vec![f64::INFINITY; 3],
            residual_norm: z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            converged: false,
            iterations: 0,
            degenerate: true,
        });
    }
    // 1/(r+1) = (Γ₂ + i(δ − δ₀))/Γ₁ is linear in δ; weighted fit for the start.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy, mut sre) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (d, v) in trace.detunings.iter().zip(&z) {
        let w = v.norm_sqr().powi(2);
        let inv = 1.0 / v;
        sw += w;
        sx += w * d;
        sy += w * inv.im;
        sxx += w * d * d;
        sxy += w * d * inv.im;
        sre += w * inv.re;
    }
    let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    let icpt = (sy - slope * sx) / sw;
    let icpt = if icpt.is_finite() { icpt } else { 0.0 };
    let g1_0 = if slope.is_finite() && slope > 0.0 {
        1.0 / slope
    } else {
        peak
    };
    let d0 = -icpt * g1_0;
    let g2_0 = (sre / sw * g1_0).max(0.5 * g1_0);
    let span = trace.detunings[n - 1] - trace.detunings[0];
    let res = |x: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * n);
        for (d, r) in trace.detunings.iter().zip(&trace.r_values) {
            let m = Complex64::new(-1.0, 0.0) + x[0] / Complex64::new(x[1], d - x[2]);
            out.push(m.re - r.re);
            out.push(m.im - r.im);
        }
        out
    };
    let scale = [g1_0.abs().max(1e-3 * span), g2_0.abs().max(1e-3 * span), span];
    let mut fit = least_squares(
        &names,
        res,
        &[g1_0, g2_0, d0],
        &scale,
        Method::LevenbergMarquardt,
        &Options::default(),
    );
    fit.values[2] += trace.omega_ref;
    fit.degenerate = fit.values[0] < floor * fit.values[1].abs();
    Ok(fit)
}

/// Γ_φ = Γ₂ − Γ₁/2 from a trace fit.
pub fn dephasing_from_fit(fit: &FitResult) -> Option<f64> {
    Some(fit.get("gamma2")? - 0.5 * fit.get("gamma1")?)
}

/// Free parameters of the global flux-curve fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxFitParams {
    pub ic1: f64,
    pub ic2: f64,
    pub c_sq: f64,
    pub c_s: f64,
    pub phi_off: f64,
}

impl FluxFitParams {
    pub const NAMES: [&'static str; 5] = ["ic1", "ic2", "c_sq", "c_s", "phi_off"];

    pub fn from_model(m: &BoundaryModel) -> Self {
        FluxFitParams {
            ic1: m.squid.ic1,
            ic2: m.squid.ic2,
            c_sq: m.squid.c_sq,
            c_s: m.coupling.c_s,
            phi_off: m.coupling.phi_off,
        }
    }

    pub fn apply(&self, base: &BoundaryModel) -> BoundaryModel {
        let mut m = *base;
        m.squid.ic1 = self.ic1;
        m.squid.ic2 = self.ic2;
        m.squid.c_sq = self.c_sq;
        m.coupling.c_s = self.c_s;
        m.coupling.phi_off = self.phi_off;
        m
    }

    fn to_vec(self) -> Vec<f64> {
        vec![self.ic1, self.ic2, self.c_sq, self.c_s, self.phi_off]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        FluxFitParams {
            ic1: x[0],
            ic2: x[1],
            c_sq: x[2],
            c_s: x[3],
            phi_off: x[4],
        }
    }

    /// Junction currents ordered so that ic1 ≤ ic2 (the curve is invariant
    /// under their exchange).
    pub fn canonical(mut self) -> Self {
        if self.ic1 > self.ic2 {
            std::mem::swap(&mut self.ic1, &mut self.ic2);
        }
        self
    }
}

fn curve_model(base: &BoundaryModel, p: &FluxFitParams, flux: f64) -> f64 {
    if !(p.ic1 > 0.0 && p.ic2 > 0.0 && p.c_sq > 0.0 && p.c_s > 0.0 && p.c_s < base.coupling.c_sigma) {
        return f64::NAN;
    }
    p.apply(base).emission_rate(FluxBias(flux)).unwrap_or(0.0)
}

/// Starting point from curve landmarks: the deepest point of the data fixes
/// φ_off through the node condition, the peak height fixes C_s.
pub fn landmark_guess(points: &[(f64, f64)], base: &BoundaryModel, start: FluxFitParams) -> FluxFitParams {
    let mut p = start;
    let in_half: Vec<&(f64, f64)> = points
        .iter()
        .filter(|(f, _)| FluxBias(*f).folded() < 0.5 - 1e-9)
        .collect();
    if let Some(&&(f_zero, _)) = in_half.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        if let Ok(phi_sq) = p.apply(base).squid_phase(FluxBias(f_zero)) {
            p.phi_off = 0.5 * phi_sq - 0.5 * PI;
        }
    }
    let data_max = points.iter().map(|q| q.1).fold(0.0, f64::max);
    let model_max = points
        .iter()
        .map(|q| curve_model(base, &p, q.0))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    if data_max > 0.0 && model_max > 0.0 {
        let c_s = p.c_s * (data_max / model_max).sqrt();
        if c_s < base.coupling.c_sigma {
            p.c_s = c_s;
        }
    }
    p
}

/// Global fit of (I_C1, I_C2, C_SQ, C_s, φ_off) to Γ₁(Φ) data, with the line,
/// C_Σ, E_J, E_C and ω₀₁ of `base` held fixed.
pub fn fit_flux_curve(
    points: &[(f64, f64)],
    base: &BoundaryModel,
    initial: FluxFitParams,
    method: Method,
) -> Result<FitResult> {
    if points.len() < 10 {
        return Err(Error::Fit("need at least 10 flux points".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1.0 - 1e-9 {
        return Err(Error::Fit("flux points must span a full period".into()));
    }
    let norm = points
        .iter()
        .map(|p| p.1.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let res = |x: &[f64]| -> Vec<f64> {
        let p = FluxFitParams::from_slice(x);
        points
            .iter()
            .map(|&(f, g)| (curve_model(base, &p, f) - g) / norm)
            .collect()
    };
    let x0 = initial.to_vec();
    let scale = [initial.ic1, initial.ic2, initial.c_sq, initial.c_s, 1.0];
    let opts = Options::default();
    let mut fit = least_squares(&FluxFitParams::NAMES, res, &x0, &scale, method, &opts);
    if method == Method::NelderMead {
        // Polish: the simplex stalls on long valleys of the 5-d landscape.
        let again = least_squares(
            &FluxFitParams::NAMES,
            res,
            &fit.values,
            &scale,
            Method::LevenbergMarquardt,
            &opts,
        );
        if again.residual_norm <= fit.residual_norm {
            fit.values = again.values;
            fit.uncertainties = again.uncertainties;
            fit.residual_norm = again.residual_norm;
            fit.converged |= again.converged;
        }
    }
    let p = FluxFitParams::from_slice(&fit.values);
    if !(p.ic1 > 0.0 && p.ic2 > 0.0 && p.c_sq > 0.0 && p.c_s > 0.0) {
        return Err(Error::Fit("parameters left the physical region".into()));
    }
    if p.ic1 > p.ic2 {
        fit.values.swap(0, 1);
        fit.uncertainties.swap(0, 1);
    }
    fit.residual_norm *= norm;
    Ok(fit)
}

/// Line length from the decoupling flux: the node offset is the fraction
/// f = (1/2 − Φ_dec)/(1/2) of a quarter wavelength.
pub fn infer_line_length(decoupling_flux: f64, omega01: f64, v: f64) -> Result<f64> {
    if !(decoupling_flux > 0.0 && decoupling_flux <= 0.5) {
        return Err(Error::param(
            "decoupling_flux",
            format!("{decoupling_flux} outside (0, 1/2]"),
        ));
    }
    if !(omega01 > 0.0 && v > 0.0) {
        return Err(Error::param("omega01", "frequency and velocity must be positive"));
    }
    let f = (0.5 - decoupling_flux) / 0.5;
    let lambda = 2.0 * PI * v / omega01;
    Ok((1.0 + f) * lambda / 4.0)
}

/// max/min of Γ₁ on a uniform grid over one period, ignoring exact zeros.
pub fn on_off_ratio(device: &Device, step: f64) -> f64 {
    let curve = device.flux_curve(step);
    let max = curve.iter().map(|p| p.1).fold(0.0, f64::max);
    let min = curve
        .iter()
        .map(|p| p.1)
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::angular;

    #[test]
    fn reflection_limits() {
        assert_eq!(
            reflection_coefficient(0.0, 1.0, 3.0).unwrap(),
            Complex64::new(-1.0, 0.0)
        );
        let r = reflection_coefficient(2.0, 1.0, 0.0).unwrap();
        assert!((r - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(reflection_coefficient(2.0, 0.9, 0.0).is_err());
    }

    #[test]
    fn reflection_golden_value() {
        // Γ₁/2π = 1.9 MHz, Γ_φ/2π = 0.7 MHz, δω/2π = 1 MHz, evaluated independently.
        let r = reflection_coefficient(angular(1.9e6), angular(1.65e6), angular(1e6)).unwrap();
        assert!((r.re - -0.157_824_042_981_867_03).abs() < 1e-14);
        assert!((r.im - -0.510_409_670_920_080_6).abs() < 1e-14);
    }

    fn grid(half_span: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| -half_span + 2.0 * half_span * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn noiseless_trace_round_trip() {
        let d = Device::paper2017();
        let det = grid(angular(10e6), 201);
        let t = synthesize_trace(&d, 0.0, &det, 0.0, 1).unwrap();
        let f = fit_trace(&t).unwrap();
        let g1 = d.gamma1(0.0);
        let g2 = probe_linewidth(&d, 0.0);
        assert!((f.get("gamma1").unwrap() / g1 - 1.0).abs() < 1e-3);
        assert!((f.get("gamma2").unwrap() / g2 - 1.0).abs() < 1e-3);
        assert!((f.get("omega01").unwrap() - d.transmon.omega01).abs() < 1e-3 * g2);
        assert!(f.residual_norm < 1e-9);
        // Half width Γ₂/2π ≈ 1.65 MHz.
        assert!((g2 / angular(1e6) - 1.65).abs() < 0.01);
    }

    #[test]
    fn decoupled_trace_is_degenerate() {
        let d = Device::paper2017();
        let dec = d.decoupling_flux().unwrap();
        let t = synthesize_trace(&d, dec, &grid(angular(10e6), 101), 0.0, 1).unwrap();
        assert!(fit_trace(&t).unwrap().degenerate);
    }

    #[test]
    fn traces_are_deterministic() {
        let d = Device::paper2017();
        let det = grid(angular(10e6), 51);
        let a = synthesize_trace(&d, 0.1, &det, 0.05, 9).unwrap();
        let b = synthesize_trace(&d, 0.1, &det, 0.05, 9).unwrap();
        assert_eq!(a, b);
        let c = synthesize_trace(&d, 0.1, &det, 0.05, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn line_length_inference() {
        let d = Device::paper2017();
        let (w, v) = (d.transmon.omega01, d.boundary.line.v);
        let quarter = PI * v / (2.0 * w);
        assert!((infer_line_length(0.5, w, v).unwrap() - quarter).abs() < 1e-15);
        assert!((infer_line_length(0.39, w, v).unwrap() - 9.49e-3).abs() < 1e-9);
        assert!((infer_line_length(0.45, w, v).unwrap() / quarter - 1.1).abs() < 1e-12);
        assert!(infer_line_length(0.6, w, v).is_err());
    }
}
