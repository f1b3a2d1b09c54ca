//! Fixed-step RK4 propagation of the vectorised master equation, forward for
//! states and backward for adjoint (observable) vectors.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::generator::{ControlPoint, Controls, Generator};
use super::pulse::DrivePulse;
use super::TransmonParams;
use crate::density::DensityMatrix;
use crate::error::{Error, Result};

const CACHE_SLOTS: usize = 4;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Time integrals carried along with the state, integrated by the same RK4
/// stages so that photon bookkeeping closes to integrator accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepAccumulators {
    /// ∫ Γ₁(t) ⟨b†b⟩ dt, photons emitted into the line.
    pub emitted: f64,
    /// ∫ (Γ₁,ᵢ + Γ_exc) ⟨b†b⟩ dt, excitations lost to other channels.
    pub intrinsic_loss: f64,
}

/// Source term of an adjoint integration: ∫ w(t) Tr[O ρ(t)] dt.
pub struct AdjointSource<'a> {
    pub operator: &'a DMatrix<C64>,
    pub weight: &'a (dyn Fn(f64) -> f64 + Sync),
}

/// Number of uniform steps covering [t0, t1] with step no larger than `dt`.
fn step_count(t0: f64, t1: f64, dt: f64) -> usize {
    let span = t1 - t0;
    if span <= 0.0 {
        return 0;
    }
    ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

pub struct Evolver<'g> {
    gen: &'g Generator,
    cache: Vec<([u64; 6], Vec<C64>)>,
    next_slot: usize,
    number_diag: Vec<usize>,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl<'g> Evolver<'g> {
    pub fn new(gen: &'g Generator) -> Self {
        let d = gen.dim();
        let n = d * d;
        Evolver {
            gen,
            cache: Vec::with_capacity(CACHE_SLOTS),
            next_slot: 0,
            number_diag: (0..d).map(|j| j + j * d).collect(),
            k: std::array::from_fn(|_| vec![ZERO; n]),
            tmp: vec![ZERO; n],
        }
    }

    pub fn generator(&self) -> &Generator {
        self.gen
    }

    fn values_index(&mut self, cp: &ControlPoint) -> usize {
        let coeffs = self.gen.coefficients(cp);
        let key = coeffs.map(f64::to_bits);
        if let Some(i) = self.cache.iter().position(|(k, _)| *k == key) {
            return i;
        }
        let mut vals = Vec::new();
        self.gen.assemble_into(&coeffs, &mut vals);
        if self.cache.len() < CACHE_SLOTS {
            self.cache.push((key, vals));
            self.cache.len() - 1
        } else {
            let i = self.next_slot;
            self.next_slot = (self.next_slot + 1) % CACHE_SLOTS;
            self.cache[i] = (key, vals);
            i
        }
    }

    fn occupation(&self, x: &[C64]) -> f64 {
        self.number_diag
            .iter()
            .enumerate()
            .map(|(j, &k)| j as f64 * x[k].re)
            .sum()
    }

    /// One RK4 step of dρ/dt = L(t)ρ from t to t + h.
    pub fn step<C: Controls + ?Sized>(
        &mut self,
        controls: &C,
        t: f64,
        h: f64,
        state: &mut [C64],
        acc: Option<&mut StepAccumulators>,
    ) {
        let cps = [controls.at(t), controls.at(t + 0.5 * h), controls.at(t + h)];
        let idx = cps.map(|cp| self.values_index(&cp));
        let stage_cp = [cps[0], cps[1], cps[1], cps[2]];
        let stage_idx = [idx[0], idx[1], idx[1], idx[2]];
        let extra = self.gen_extra();
        let mut emitted = [0.0; 4];
        let mut lost = [0.0; 4];
        let frac = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let (src, dst): (&[C64], &mut Vec<C64>) = if s == 0 {
                (state, &mut self.k[0])
            } else {
                for (o, (x, kk)) in self.tmp.iter_mut().zip(state.iter().zip(&self.k[s - 1])) {
                    *o = x + kk * (frac[s] * h);
                }
                (&self.tmp, &mut self.k[s])
            };
            let n = self
                .number_diag
                .iter()
                .enumerate()
                .map(|(j, &k)| j as f64 * src[k].re)
                .sum::<f64>();
            emitted[s] = stage_cp[s].gamma1 * n;
            lost[s] = extra * n;
            self.gen.apply(&self.cache[stage_idx[s]].1, src, dst);
        }
        let w = h / 6.0;
        for (i, x) in state.iter_mut().enumerate() {
            *x += (self.k[0][i] + (self.k[1][i] + self.k[2][i]) * 2.0 + self.k[3][i]) * w;
        }
        if let Some(a) = acc {
            a.emitted += w * (emitted[0] + 2.0 * (emitted[1] + emitted[2]) + emitted[3]);
            a.intrinsic_loss += w * (lost[0] + 2.0 * (lost[1] + lost[2]) + lost[3]);
        }
    }

    fn gen_extra(&self) -> f64 {
        // Non-radiative relaxation enters the down coefficient at zero drive.
        let c = self.gen.coefficients(&ControlPoint::IDLE);
        c[3] - c[4]
    }

    /// Propagates `state` over [t0, t1] in uniform steps no longer than `dt`.
    /// `observe` is called at t0 and after every step with the current time
    /// and state. Returns the number of steps taken.
    pub fn evolve<C, F>(
        &mut self,
        controls: &C,
        state: &mut [C64],
        t0: f64,
        t1: f64,
        dt: f64,
        acc: &mut StepAccumulators,
        mut observe: F,
    ) -> usize
    where
        C: Controls + ?Sized,
        F: FnMut(f64, &[C64]),
    {
        let n = step_count(t0, t1, dt);
        observe(t0, state);
        if n == 0 {
            return 0;
        }
        let h = (t1 - t0) / n as f64;
        for k in 0..n {
            let t = t0 + k as f64 * h;
            self.step(controls, t, h, state, Some(acc));
            observe(if k + 1 == n { t1 } else { t + h }, state);
        }
        n
    }

    /// One backward RK4 step of dY/dt = −L(t)^H Y − o(t) from t to t − h.
    fn adjoint_step<C: Controls + ?Sized>(
        &mut self,
        controls: &C,
        source: Option<(&[C64], &(dyn Fn(f64) -> f64 + Sync))>,
        t: f64,
        h: f64,
        y: &mut [C64],
    ) {
        let times = [t, t - 0.5 * h, t - h];
        let idx = times.map(|s| {
            let cp = controls.at(s);
            self.values_index(&cp)
        });
        let weights = match source {
            Some((_, w)) => times.map(w),
            None => [0.0; 3],
        };
        let stage_idx = [idx[0], idx[1], idx[1], idx[2]];
        let stage_w = [weights[0], weights[1], weights[1], weights[2]];
        let frac = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let (src, dst): (&[C64], &mut Vec<C64>) = if s == 0 {
                (y, &mut self.k[0])
            } else {
                for (o, (x, kk)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k[s - 1])) {
                    *o = x + kk * (frac[s] * h);
                }
                (&self.tmp, &mut self.k[s])
            };
            // In reversed time τ = T − t: dY/dτ = L^H Y + o.
            self.gen.apply_adjoint(&self.cache[stage_idx[s]].1, src, dst);
            if let Some((o, _)) = source {
                if stage_w[s] != 0.0 {
                    for (d, v) in dst.iter_mut().zip(o) {
                        *d += v * stage_w[s];
                    }
                }
            }
        }
        let w = h / 6.0;
        for (i, x) in y.iter_mut().enumerate() {
            *x += (self.k[0][i] + (self.k[1][i] + self.k[2][i]) * 2.0 + self.k[3][i]) * w;
        }
    }

    /// Integrates the adjoint equation backward from Y(t1) = `terminal` to
    /// t0. On return `y` holds Y(t0), so that
    /// ⟨Y(t0), ρ(t0)⟩ = ⟨terminal, ρ(t1)⟩ + ∫ w(t) Tr[O ρ(t)] dt.
    /// `observe` sees Y at t1 and after every step, in decreasing time.
    pub fn adjoint<C, F>(
        &mut self,
        controls: &C,
        source: Option<&AdjointSource<'_>>,
        y: &mut [C64],
        t0: f64,
        t1: f64,
        dt: f64,
        mut observe: F,
    ) -> usize
    where
        C: Controls + ?Sized,
        F: FnMut(f64, &[C64]),
    {
        let o_vec: Option<Vec<C64>> = source.map(|s| s.operator.adjoint().as_slice().to_vec());
        let src = match (&o_vec, source) {
            (Some(o), Some(s)) => Some((o.as_slice(), s.weight)),
            _ => None,
        };
        let n = step_count(t0, t1, dt);
        observe(t1, y);
        if n == 0 {
            return 0;
        }
        let h = (t1 - t0) / n as f64;
        for k in 0..n {
            let t = t1 - k as f64 * h;
            self.adjoint_step(controls, src, t, h, y);
            observe(if k + 1 == n { t0 } else { t - h }, y);
        }
        n
    }

    /// ⟨n⟩ for a vectorised state.
    pub fn mean_occupation(&self, x: &[C64]) -> f64 {
        self.occupation(x)
    }
}

/// Vector Y with ⟨Y, vec ρ(t0)⟩ = ∫_{t0}^{t1} w(t) Tr[O ρ(t)] dt for the
/// evolution generated by `controls`.
pub fn integrated_signal_functional<C: Controls + ?Sized>(
    gen: &Generator,
    controls: &C,
    operator: &DMatrix<C64>,
    weight: &(dyn Fn(f64) -> f64 + Sync),
    t0: f64,
    t1: f64,
    dt: f64,
) -> Vec<C64> {
    let d = gen.dim();
    let mut y = vec![ZERO; d * d];
    let src = AdjointSource { operator, weight };
    Evolver::new(gen).adjoint(controls, Some(&src), &mut y, t0, t1, dt, |_, _| {});
    y
}

/// Hilbert–Schmidt inner product ⟨a, b⟩ = Σ conj(a)·b.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// One RK4 step of the master equation with the drive of `drive` and a
/// radiative rate Γ₁(t). Pure dephasing is the intrinsic rate only; the
/// flux-dependent part is supplied by the schedule runner.
pub fn lindblad_step(
    state: &DensityMatrix,
    params: &TransmonParams,
    drive: &DrivePulse,
    gamma1_of_t: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    if state.dim() != params.levels {
        return Err(Error::Dimension {
            expected: params.levels,
            found: state.dim(),
        });
    }
    let gen = Generator::new(params);
    let peak_gamma = [t, t + 0.5 * dt, t + dt]
        .iter()
        .map(|&s| gamma1_of_t(s))
        .fold(0.0, f64::max);
    let peak = ControlPoint {
        drive: C64::new(drive.peak_amplitude(), 0.0),
        gamma1: peak_gamma,
        gamma_phi_flux: 0.0,
    };
    let dt_max = gen.dt_max(drive.peak_amplitude(), drive.carrier_detuning, &peak);
    if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, dt_max });
    }
    let controls = |s: f64| ControlPoint {
        drive: drive.complex_amplitude(s),
        gamma1: gamma1_of_t(s),
        gamma_phi_flux: 0.0,
    };
    let mut x = state.to_vec();
    Evolver::new(&gen).step(&controls, t, dt, &mut x, None);
    Ok(DensityMatrix::from_vec(params.levels, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{lowering_operator, ConstantControls, DephasingTable};
    use std::f64::consts::PI;

    fn two_level(gamma1_i: f64) -> TransmonParams {
        TransmonParams {
            omega01: 2.0 * PI * 3.69e9,
            alpha: 2.0 * PI * -141.7e6,
            levels: 2,
            gamma1_intrinsic: gamma1_i,
            gammaphi_intrinsic: 0.0,
            gammaphi_flux: DephasingTable::empty(),
            t_eff: 0.0,
            gamma_excitation_line: 0.0,
        }
    }

    #[test]
    fn free_state_is_stationary() {
        let p = TransmonParams {
            levels: 3,
            ..two_level(0.0)
        };
        let rho = DensityMatrix::from_diagonal(&[0.5, 0.3, 0.2]);
        let drive = DrivePulse::square(0.0, 0.0, 1e-6);
        let next = lindblad_step(&rho, &p, &drive, &|_| 0.0, 0.0, 1e-11).unwrap();
        assert_eq!(next, rho);
    }

    #[test]
    fn step_bound_is_enforced() {
        let p = TransmonParams {
            levels: 3,
            ..two_level(0.0)
        };
        let rho = DensityMatrix::ground(3);
        let drive = DrivePulse::square(1e8, 0.0, 1e-6);
        assert!(matches!(
            lindblad_step(&rho, &p, &drive, &|_| 0.0, 0.0, 1e-9),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn two_level_decay_is_exponential() {
        let g = 1.2e7;
        let p = two_level(0.0);
        let gen = Generator::new(&p);
        let controls = ConstantControls(ControlPoint {
            gamma1: g,
            ..ControlPoint::IDLE
        });
        let mut x = DensityMatrix::basis(2, 1).to_vec();
        let mut acc = StepAccumulators::default();
        let mut worst: f64 = 0.0;
        Evolver::new(&gen).evolve(&controls, &mut x, 0.0, 300e-9, 1e-9, &mut acc, |t, s| {
            let exact = (-g * t).exp();
            worst = worst.max((s[3].re - exact).abs() / exact);
        });
        assert!(worst < 1e-6, "{worst}");
        let left = x[3].re;
        assert!((acc.emitted + left - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adjoint_matches_forward_integral() {
        let mut p = two_level(2e6);
        p.levels = 3;
        p.t_eff = 0.09;
        p.gammaphi_intrinsic = 1e6;
        let gen = Generator::new(&p);
        let controls = |t: f64| ControlPoint {
            drive: C64::from_polar(4e7 * (t * 2e7).sin(), 0.3),
            gamma1: 1e7 * (1.0 + (t * 1e7).cos()),
            gamma_phi_flux: 0.0,
        };
        let b = lowering_operator(3);
        let w = |t: f64| 1.0 + t * 1e7;
        let (t0, t1, dt) = (0.0, 200e-9, 5e-11);
        let y = integrated_signal_functional(&gen, &controls, &b, &w, t0, t1, dt);
        let rho0 = DensityMatrix::pure(&[C64::new(0.8, 0.0), C64::new(0.0, 0.6), C64::new(0.0, 0.0)]);
        // Forward oracle: trapezoid rule on the sampled trajectory.
        let mut x = rho0.to_vec();
        let mut samples = Vec::new();
        Evolver::new(&gen).evolve(&controls, &mut x, t0, t1, dt, &mut Default::default(), |t, s| {
            let tr: C64 = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| b[(j, i)] * s[i + 3 * j])
                .sum();
            samples.push(tr * w(t));
        });
        let h = (t1 - t0) / (samples.len() - 1) as f64;
        let n = samples.len();
        let trap: C64 = samples
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 || k == n - 1 { v * 0.5 } else { *v })
            .sum::<C64>()
            * h;
        let adj = inner(&y, &rho0.to_vec());
        assert!((adj - trap).norm() < 1e-6 * trap.norm(), "{adj} vs {trap}");
    }
}
