//! Least-squares engine shared by the spectroscopy and time-domain fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// One-sigma uncertainties from s²(JᵀJ)⁻¹ at the optimum.
    pub uncertainties: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the data carry no information on the model (e.g. a decoupled
    /// qubit or a flat trace).
    pub degenerate: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.values[k])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.uncertainties[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NelderMead,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iter: usize,
    /// Relative tolerance on the objective (NM) or step (LM).
    pub tol: f64,
    /// Nelder–Mead restarts from the current best point.
    pub restarts: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_iter: 20_000,
            tol: 1e-13,
            restarts: 4,
        }
    }
}

/// Minimises `f` with the Nelder–Mead simplex. `step` sets the initial
/// simplex edge per coordinate. Returns (x, f(x), iterations, converged).
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], opts: &Options) -> (Vec<f64>, f64, usize, bool)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = x0.to_vec();
    let mut fbest = eval(&best);
    let mut iters = 0;
    let mut converged = false;
    for restart in 0..=opts.restarts {
        let shrink_start = 0.5f64.powi(restart as i32);
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..n {
            let mut p = best.clone();
            let h = step[i] * shrink_start;
            p[i] += if h != 0.0 { h } else { 1e-4 };
            simplex.push(p);
        }
        let mut fv: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
        converged = false;
        while iters < opts.max_iter {
            iters += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
            simplex = order.iter().map(|&k| simplex[k].clone()).collect();
            fv = order.iter().map(|&k| fv[k]).collect();
            let spread = (fv[n] - fv[0]).abs();
            if spread <= opts.tol * fv[0].abs() || spread <= 1e-24 {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |c: f64| -> Vec<f64> {
                (0..n)
                    .map(|j| centroid[j] + c * (simplex[n][j] - centroid[j]))
                    .collect()
            };
            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < fv[0] {
                let xe = along(-2.0);
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    fv[n] = fe;
                } else {
                    simplex[n] = xr;
                    fv[n] = fr;
                }
            } else if fr < fv[n - 1] {
                simplex[n] = xr;
                fv[n] = fr;
            } else {
                let (xc, fc) = if fr < fv[n] {
                    let x = along(-0.5);
                    let v = eval(&x);
                    (x, v)
                } else {
                    let x = along(0.5);
                    let v = eval(&x);
                    (x, v)
                };
                if fc < fv[n].min(fr) {
                    simplex[n] = xc;
                    fv[n] = fc;
                } else {
                    for k in 1..=n {
                        for j in 0..n {
                            simplex[k][j] = simplex[0][j] + 0.5 * (simplex[k][j] - simplex[0][j]);
                        }
                        fv[k] = eval(&simplex[k]);
                    }
                }
            }
        }
        let k = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
        let improved = fv[k] < fbest;
        if fv[k] <= fbest {
            best = simplex[k].clone();
            fbest = fv[k];
        }
        if restart > 0 && !improved && converged {
            break;
        }
    }
    (best, fbest, iters, converged)
}

/// Jacobian by central differences.
pub fn jacobian<R>(residuals: &R, x: &[f64], scale: &[f64]) -> DMatrix<f64>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let m = residuals(x).len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(scale[j].abs()).max(f64::MIN_POSITIVE);
        xp[j] = x[j] + h;
        let rp = residuals(&xp);
        xp[j] = x[j] - h;
        let rm = residuals(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Levenberg–Marquardt with Marquardt diagonal scaling.
pub fn levenberg_marquardt<R>(residuals: &R, x0: &[f64], scale: &[f64], opts: &Options) -> (Vec<f64>, usize, bool)
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let ssr = |x: &[f64]| -> f64 {
        let r = residuals(x);
        let s: f64 = r.iter().map(|v| v * v).sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut cost = ssr(&x);
    let mut lambda = 1e-3;
    for it in 0..opts.max_iter.min(1000) {
        let jac = jacobian(residuals, &x, scale);
        let r = DVector::from_vec(residuals(&x));
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let cn = ssr(&xn);
            if cn <= cost {
                let small = delta
                    .iter()
                    .zip(&x)
                    .zip(scale)
                    .all(|((d, xi), s)| d.abs() <= 1e-12 * xi.abs().max(s.abs()));
                let gain = cost - cn;
                x = xn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if small || gain <= opts.tol * cost || cost == 0.0 {
                    return (x, it + 1, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: stationary to working precision.
            return (x, it + 1, true);
        }
    }
    (x, opts.max_iter.min(1000), false)
}

/// One-sigma parameter uncertainties from the residual curvature.
pub fn uncertainties<R>(residuals: &R, x: &[f64], scale: &[f64]) -> Vec<f64>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let r = residuals(x);
    let (m, n) = (r.len(), x.len());
    if m <= n {
        return vec![f64::INFINITY; n];
    }
    let s2 = r.iter().map(|v| v * v).sum::<f64>() / (m - n) as f64;
    let jac = jacobian(residuals, x, scale);
    match (jac.transpose() * &jac).try_inverse() {
        Some(cov) => (0..n).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; n],
    }
}

/// General least-squares fit. `scale` gives the typical magnitude of each
/// parameter; the optimiser works on x/scale.
pub fn least_squares<R>(
    names: &[&str],
    residuals: R,
    x0: &[f64],
    scale: &[f64],
    method: Method,
    opts: &Options,
) -> FitResult
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let to_phys = |u: &[f64]| -> Vec<f64> { u.iter().zip(scale).map(|(a, s)| a * s).collect() };
    let scaled = |u: &[f64]| residuals(&to_phys(u));
    let u0: Vec<f64> = x0.iter().zip(scale).map(|(a, s)| a / s).collect();
    let ones = vec![1.0; x0.len()];
    let (u, iterations, converged) = match method {
        Method::NelderMead => {
            let obj = |u: &[f64]| scaled(u).iter().map(|v| v * v).sum::<f64>();
            let step: Vec<f64> = u0.iter().map(|v| 0.05 * v.abs().max(0.1)).collect();
            let (u, _, it, conv) = nelder_mead(obj, &u0, &step, opts);
            (u, it, conv)
        }
        Method::LevenbergMarquardt => levenberg_marquardt(&scaled, &u0, &ones, opts),
    };
    let values = to_phys(&u);
    let r = residuals(&values);
    let residual_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unc_scaled = uncertainties(&scaled, &u, &ones);
    FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        values,
        uncertainties: unc_scaled.iter().zip(scale).map(|(a, s)| a * s.abs()).collect(),
        residual_norm,
        converged: converged && residual_norm.is_finite(),
        iterations,
        degenerate: false,
    }
}

/// Linear least squares min ‖A c − y‖ by SVD. Returns (c, SSR).
fn linear_fit(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(y.len(), cols.len(), |i, j| cols[j][i]);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&DVector::from_column_slice(y), 1e-12).ok()?;
    let r = &a * &c - DVector::from_column_slice(y);
    Some((c.iter().cloned().collect(), r.norm_squared()))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
}

fn check_series(t: &[f64], y: &[f64], min: usize) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::Fit("time and value arrays differ in length".into()));
    }
    if t.len() < min {
        return Err(Error::Fit(format!("need at least {min} points")));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    Ok(())
}

fn is_flat(y: &[f64]) -> bool {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let mag = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    max - min <= 1e-12 * mag.max(f64::MIN_POSITIVE) || max - min == 0.0
}

/// Fits y = A·exp(−k t) (+ c). Reported parameters: amplitude, rate, tau,
/// offset. A non-decaying series gives tau = ∞ with `degenerate` set.
pub fn fit_exponential(t: &[f64], y: &[f64], with_offset: bool) -> Result<FitResult> {
    check_series(t, y, if with_offset { 4 } else { 3 })?;
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let ts: Vec<f64> = t.iter().map(|v| v - t0).collect();
    let names = ["amplitude", "rate", "tau", "offset"];
    if is_flat(y) {
        return Ok(FitResult {
            names: names.iter().map(|s| s.to_string()).collect(),
            values: vec![0.0, 0.0, f64::INFINITY, y[0]],
            uncertainties: vec![0.0, 0.0, f64::INFINITY, 0.0],
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
            degenerate: true,
        });
    }
    let basis = |k: f64| -> Vec<Vec<f64>> {
        let e: Vec<f64> = ts.iter().map(|s| (-k * s).exp()).collect();
        if with_offset {
            vec![e, vec![1.0; ts.len()]]
        } else {
            vec![e]
        }
    };
    let mut best = (0.0, f64::INFINITY, vec![0.0, 0.0]);
    for k in std::iter::once(0.0).chain(log_grid(0.01 / span, 100.0 / span, 241)) {
        if let Some((c, ssr)) = linear_fit(&basis(k), y) {
            if ssr < best.1 {
                best = (k, ssr, c);
            }
        }
    }
    let (k0, _, c0) = best;
    let mut x0 = vec![c0[0], k0 * span];
    if with_offset {
        x0.push(c0[1]);
    }
    let amp_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut scale = vec![amp_scale, 1.0];
    if with_offset {
        scale.push(amp_scale);
    }
    let model_res = |x: &[f64]| -> Vec<f64> {
        let off = if with_offset { x[2] } else { 0.0 };
        ts.iter()
            .zip(y)
            .map(|(s, v)| x[0] * (-x[1] * s / span).exp() + off - v)
            .collect()
    };
    let pnames: &[&str] = if with_offset {
        &["amplitude", "rate", "offset"]
    } else {
        &["amplitude", "rate"]
    };
    let fit = least_squares(
        pnames,
        model_res,
        &x0,
        &scale,
        Method::LevenbergMarquardt,
        &Options::default(),
    );
    let rate = fit.values[1] / span;
    let rate_unc = fit.uncertainties[1] / span;
    let degenerate = rate * span < 1e-9;
    let tau = if degenerate { f64::INFINITY } else { 1.0 / rate };
    let (offset, off_unc) = if with_offset {
        (fit.values[2], fit.uncertainties[2])
    } else {
        (0.0, 0.0)
    };
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        // Amplitude at the first sample time.
        values: vec![fit.values[0], rate, tau, offset],
        uncertainties: vec![
            fit.uncertainties[0],
            rate_unc,
            if degenerate {
                f64::INFINITY
            } else {
                rate_unc / (rate * rate)
            },
            off_unc,
        ],
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        iterations: fit.iterations,
        degenerate,
    })
}

/// Fits y = A·exp(−k t)·cos(ω t + φ) + c. Parameters: amplitude, rate,
/// omega, phase, offset, tau. Flat data are a fit failure.
pub fn fit_damped_sine(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_series(t, y, 6)?;
    if is_flat(y) {
        return Err(Error::Fit("flat signal carries no oscillation".into()));
    }
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let ts: Vec<f64> = t.iter().map(|v| v - t0).collect();
    let nyquist = std::f64::consts::PI * (t.len() - 1) as f64 / span;
    let mut best = (0.0, 0.0, f64::INFINITY, vec![]);
    for w in (1..=400).map(|k| k as f64 / 400.0 * nyquist * 0.5) {
        for k in std::iter::once(0.0).chain(log_grid(0.05 / span, 20.0 / span, 25)) {
            let e: Vec<f64> = ts.iter().map(|s| (-k * s).exp()).collect();
            let cols = vec![
                ts.iter().zip(&e).map(|(s, e)| e * (w * s).cos()).collect(),
                ts.iter().zip(&e).map(|(s, e)| e * (w * s).sin()).collect(),
                vec![1.0; ts.len()],
            ];
            if let Some((c, ssr)) = linear_fit(&cols, y) {
                if ssr < best.2 {
                    best = (w, k, ssr, c);
                }
            }
        }
    }
    let (w0, k0, _, c0) = best;
    if c0.is_empty() {
        return Err(Error::Fit("no oscillation found".into()));
    }
    // a cos + b sin = A cos(ωt + φ) with A = √(a²+b²), φ = atan2(−b, a).
    let amp = c0[0].hypot(c0[1]);
    let phase = (-c0[1]).atan2(c0[0]);
    let amp_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let x0 = [amp, k0 * span, w0 * span, phase, c0[2]];
    let scale = [amp_scale, 1.0, 10.0, 1.0, amp_scale];
    let res = |x: &[f64]| -> Vec<f64> {
        ts.iter()
            .zip(y)
            .map(|(s, v)| {
                let u = s / span;
                x[0] * (-x[1] * u).exp() * (x[2] * u + x[3]).cos() + x[4] - v
            })
            .collect()
    };
    let fit = least_squares(
        &["amplitude", "rate", "omega", "phase", "offset"],
        res,
        &x0,
        &scale,
        Method::LevenbergMarquardt,
        &Options::default(),
    );
    let v = &fit.values;
    let u = &fit.uncertainties;
    let rate = v[1] / span;
    if !(v[0].abs() > 1e-9 * amp_scale) {
        return Err(Error::Fit("oscillation amplitude vanishes".into()));
    }
    let tau = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    let (amp, phase) = if v[0] < 0.0 {
        (-v[0], v[3] + std::f64::consts::PI)
    } else {
        (v[0], v[3])
    };
    // Phase referred to absolute time.
    let phase = phase - v[2] / span * t0;
    Ok(FitResult {
        names: ["amplitude", "rate", "omega", "phase", "offset", "tau"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        values: vec![amp, rate, v[2] / span, phase, v[4], tau],
        uncertainties: vec![
            u[0],
            u[1] / span,
            u[2] / span,
            u[3],
            u[4],
            if rate > 0.0 {
                u[1] / span / (rate * rate)
            } else {
                f64::INFINITY
            },
        ],
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        iterations: fit.iterations,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, fx, _, conv) = nelder_mead(f, &[-1.2, 1.0], &[0.1, 0.1], &Options::default());
        assert!(conv);
        assert!(fx < 1e-14, "{fx}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_round_trip() {
        let t: Vec<f64> = (0..200).map(|k| 1e-6 + k as f64 * 2e-8).collect();
        let y: Vec<f64> = t.iter().map(|s| 3.0 * (-(s - 1e-6) / 7e-7).exp() + 0.2).collect();
        let f = fit_exponential(&t, &y, true).unwrap();
        assert!((f.get("tau").unwrap() - 7e-7).abs() < 1e-12);
        assert!((f.get("offset").unwrap() - 0.2).abs() < 1e-9);
        assert!(f.residual_norm < 1e-9);
        let flat = fit_exponential(&t, &vec![1.0; 200], true).unwrap();
        assert!(flat.degenerate && flat.get("tau").unwrap().is_infinite());
    }

    #[test]
    fn damped_sine_round_trip() {
        let t: Vec<f64> = (0..150).map(|k| k as f64 * 2e-9).collect();
        let w = 2.0 * std::f64::consts::PI * 31e6;
        let y: Vec<f64> = t
            .iter()
            .map(|s| 0.8 * (-s / 1.1e-7).exp() * (w * s + 0.4).cos() + 0.5)
            .collect();
        let f = fit_damped_sine(&t, &y).unwrap();
        assert!((f.get("tau").unwrap() / 1.1e-7 - 1.0).abs() < 1e-8);
        assert!((f.get("omega").unwrap() / w - 1.0).abs() < 1e-9);
        assert!((f.get("phase").unwrap() - 0.4).abs() < 1e-7);
        assert!(fit_damped_sine(&t, &vec![0.3; 150]).is_err());
    }

    #[test]
    fn uncertainties_scale_with_noise() {
        let x: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let noise: Vec<f64> = (0..50).map(|k| if k % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| 2.0 * a + 1.0 + n).collect();
        let r = |p: &[f64]| x.iter().zip(&y).map(|(a, b)| p[0] * a + p[1] - b).collect::<Vec<f64>>();
        let f = least_squares(
            &["m", "c"],
            r,
            &[1.0, 0.0],
            &[1.0, 1.0],
            Method::LevenbergMarquardt,
            &Options::default(),
        );
        assert!((f.values[0] - 2.0).abs() < 1e-3);
        assert!(f.uncertainties[0] > 0.0 && f.uncertainties[0] < 1e-3);
    }
}
