//! Vectorised Lindblad generator L(t) = L₀ + Σ_k c_k(t) L_k acting on the
//! column-stacked density matrix.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::hamiltonian::{duffing_diagonal, lowering_operator, number_operator};
use super::TransmonParams;

/// Instantaneous control values seen by the transmon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    /// Complex drive Ω̃ in the frame rotating at ω₀₁ (rad/s).
    pub drive: C64,
    /// Radiative decay rate into the line (1/s).
    pub gamma1: f64,
    /// Flux-dependent excess pure dephasing (1/s).
    pub gamma_phi_flux: f64,
}

impl ControlPoint {
    pub const IDLE: ControlPoint = ControlPoint {
        drive: C64 { re: 0.0, im: 0.0 },
        gamma1: 0.0,
        gamma_phi_flux: 0.0,
    };
}

/// Time-dependent controls. Implementations must be cheap to evaluate; the
/// integrator calls `at` three times per step.
pub trait Controls: Sync {
    fn at(&self, t: f64) -> ControlPoint;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantControls(pub ControlPoint);

impl Controls for ConstantControls {
    fn at(&self, _t: f64) -> ControlPoint {
        self.0
    }
}

impl<F: Fn(f64) -> ControlPoint + Sync> Controls for F {
    fn at(&self, t: f64) -> ControlPoint {
        self(t)
    }
}

const N_PARTS: usize = 6;

/// Sparse superoperator parts on a shared sparsity pattern.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    parts: [Vec<C64>; N_PARTS],
    gamma1_extra: f64,
    nbar: f64,
    gammaphi_intrinsic: f64,
    alpha: f64,
}

fn commutator_super(h: &DMatrix<C64>) -> DMatrix<C64> {
    let d = h.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let minus_i = C64::new(0.0, -1.0);
    (id.kronecker(h) - h.transpose().kronecker(&id)).map(|x| x * minus_i)
}

fn dissipator_super(c: &DMatrix<C64>) -> DMatrix<C64> {
    let d = c.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let cdc = c.adjoint() * c;
    let half = C64::new(0.5, 0.0);
    c.conjugate().kronecker(c) - id.kronecker(&cdc).map(|x| x * half) - cdc.transpose().kronecker(&id).map(|x| x * half)
}

impl Generator {
    pub fn new(params: &TransmonParams) -> Self {
        let d = params.levels;
        let b = lowering_operator(d);
        let bd = b.adjoint();
        let n = number_operator(d);
        let mut h0 = DMatrix::zeros(d, d);
        for (j, e) in duffing_diagonal(d, params.alpha, 0.0).into_iter().enumerate() {
            h0[(j, j)] = C64::new(e, 0.0);
        }
        let x = (&b + &bd).map(|z| z * 0.5);
        let y = (&b - &bd).map(|z| z * C64::new(0.0, 0.5));
        let dense = [
            commutator_super(&h0),
            commutator_super(&x),
            commutator_super(&y),
            dissipator_super(&b),
            dissipator_super(&bd),
            dissipator_super(&n),
        ];
        let dd = d * d;
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for r in 0..dd {
            for c in 0..dd {
                if dense.iter().any(|m| m[(r, c)].norm() > 0.0) {
                    rows.push(r);
                    cols.push(c);
                }
            }
        }
        let parts = dense.map(|m| rows.iter().zip(&cols).map(|(&r, &c)| m[(r, c)]).collect());
        Generator {
            dim: d,
            rows,
            cols,
            parts,
            gamma1_extra: params.gamma1_intrinsic + params.gamma_excitation_line,
            nbar: params.thermal_occupation(),
            gammaphi_intrinsic: params.gammaphi_intrinsic,
            alpha: params.alpha,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    /// Channel coefficients [1, Re Ω̃, −Im Ω̃, γ↓, γ↑, 2Γ_φ].
    pub fn coefficients(&self, cp: &ControlPoint) -> [f64; N_PARTS] {
        let relax = cp.gamma1 + self.gamma1_extra;
        [
            1.0,
            cp.drive.re,
            -cp.drive.im,
            relax * (self.nbar + 1.0),
            relax * self.nbar,
            2.0 * (self.gammaphi_intrinsic + cp.gamma_phi_flux),
        ]
    }

    pub fn assemble_into(&self, coeffs: &[f64; N_PARTS], values: &mut Vec<C64>) {
        values.clear();
        values.extend((0..self.rows.len()).map(|k| {
            let mut v = C64::new(0.0, 0.0);
            for (p, c) in self.parts.iter().zip(coeffs) {
                if *c != 0.0 {
                    v += p[k] * c;
                }
            }
            v
        }));
    }

    /// out = L x
    pub fn apply(&self, values: &[C64], x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for ((&r, &c), v) in self.rows.iter().zip(&self.cols).zip(values) {
            out[r] += v * x[c];
        }
    }

    /// out = L^H x (adjoint under the Hilbert–Schmidt inner product).
    pub fn apply_adjoint(&self, values: &[C64], x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        for ((&r, &c), v) in self.rows.iter().zip(&self.cols).zip(values) {
            out[c] += v.conj() * x[r];
        }
    }

    /// Dense L for a control point (tests and diagnostics).
    pub fn dense(&self, cp: &ControlPoint) -> DMatrix<C64> {
        let mut vals = Vec::new();
        self.assemble_into(&self.coefficients(cp), &mut vals);
        let dd = self.dim * self.dim;
        let mut m = DMatrix::zeros(dd, dd);
        for ((&r, &c), v) in self.rows.iter().zip(&self.cols).zip(&vals) {
            m[(r, c)] = *v;
        }
        m
    }

    /// Stability bound min(0.01 / max(Ω, |α|, |δ|, Γ_tot), 1 ns) for the given
    /// peak control values. The anharmonicity only enters with three or more
    /// levels, since it has no effect on a two-level truncation.
    pub fn dt_max(&self, peak_drive: f64, max_detuning: f64, peak: &ControlPoint) -> f64 {
        let c = self.coefficients(peak);
        let gamma_tot = c[3] + c[4] + c[5];
        let alpha = if self.dim >= 3 { self.alpha.abs() } else { 0.0 };
        let scale = peak_drive.abs().max(alpha).max(max_detuning.abs()).max(gamma_tot);
        if scale > 0.0 {
            (0.01 / scale).min(1e-9)
        } else {
            1e-9
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityMatrix;
    use crate::dynamics::DephasingTable;
    use std::f64::consts::PI;

    fn params() -> TransmonParams {
        TransmonParams {
            omega01: 2.0 * PI * 3.69e9,
            alpha: 2.0 * PI * -141.7e6,
            levels: 3,
            gamma1_intrinsic: 3.5e5,
            gammaphi_intrinsic: 5.7e5,
            gammaphi_flux: DephasingTable::empty(),
            t_eff: 0.09,
            gamma_excitation_line: 0.0,
        }
    }

    // Direct matrix form of the master equation, independent of vectorisation.
    fn lindblad_direct(p: &TransmonParams, cp: &ControlPoint, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = p.levels;
        let b = lowering_operator(d);
        let bd = b.adjoint();
        let n = number_operator(d);
        let mut h = DMatrix::zeros(d, d);
        for j in 0..d {
            let jf = j as f64;
            h[(j, j)] = C64::new(0.5 * p.alpha * jf * (jf - 1.0), 0.0);
        }
        h += (&bd * cp.drive + &b * cp.drive.conj()) * C64::new(0.5, 0.0);
        let i = C64::new(0.0, 1.0);
        let mut out = (&h * rho - rho * &h) * (-i);
        let nb = p.thermal_occupation();
        let relax = cp.gamma1 + p.gamma1_intrinsic + p.gamma_excitation_line;
        let ops = [
            (b.clone(), relax * (nb + 1.0)),
            (bd.clone(), relax * nb),
            (n.clone(), 2.0 * (p.gammaphi_intrinsic + cp.gamma_phi_flux)),
        ];
        for (c, g) in ops {
            let cd = c.adjoint();
            let cdc = &cd * &c;
            let term = &c * rho * &cd - (&cdc * rho + rho * &cdc) * C64::new(0.5, 0.0);
            out += term * C64::new(g, 0.0);
        }
        out
    }

    #[test]
    fn vectorised_generator_matches_matrix_form() {
        let p = params();
        let g = Generator::new(&p);
        let cp = ControlPoint {
            drive: C64::new(3e7, -1e7),
            gamma1: 1.2e7,
            gamma_phi_flux: 4e6,
        };
        let rho = DensityMatrix::pure(&[C64::new(0.6, 0.1), C64::new(0.5, -0.3), C64::new(0.2, 0.4)]);
        let direct = lindblad_direct(&p, &cp, rho.matrix());
        let l = g.dense(&cp);
        let v = nalgebra::DVector::from_column_slice(&rho.to_vec());
        let lv = &l * v;
        for (a, b) in lv.iter().zip(direct.as_slice()) {
            assert!((a - b).norm() < 1e-6 * 3e7);
        }
        // Sparse apply agrees with dense.
        let mut vals = Vec::new();
        g.assemble_into(&g.coefficients(&cp), &mut vals);
        let mut out = vec![C64::new(0.0, 0.0); 9];
        g.apply(&vals, &rho.to_vec(), &mut out);
        for (a, b) in out.iter().zip(lv.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
        // Adjoint: ⟨y, L x⟩ = ⟨L^H y, x⟩.
        let y: Vec<C64> = (0..9)
            .map(|k| C64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05))
            .collect();
        let mut ly = vec![C64::new(0.0, 0.0); 9];
        g.apply_adjoint(&vals, &y, &mut ly);
        let lhs: C64 = y.iter().zip(&out).map(|(a, b)| a.conj() * b).sum();
        let rhs: C64 = ly.iter().zip(rho.to_vec()).map(|(a, b)| a.conj() * b).sum();
        assert!((lhs - rhs).norm() < 1e-6 * lhs.norm().max(1.0));
    }

    #[test]
    fn generator_is_trace_preserving() {
        let p = params();
        let g = Generator::new(&p);
        let cp = ControlPoint {
            drive: C64::new(1e8, 2e7),
            gamma1: 1e7,
            gamma_phi_flux: 1e6,
        };
        let l = g.dense(&cp);
        // Trace functional is vec(I); column sums over diagonal rows vanish.
        for c in 0..9 {
            let s: C64 = (0..3).map(|j| l[(j + 3 * j, c)]).sum();
            assert!(s.norm() < 1e-6);
        }
    }

    #[test]
    fn step_bound_follows_anharmonicity() {
        let p = params();
        let g = Generator::new(&p);
        let dt = g.dt_max(0.0, 0.0, &ControlPoint::IDLE);
        assert!((dt - 0.01 / p.alpha.abs()).abs() < 1e-18);
        let two = Generator::new(&TransmonParams { levels: 2, ..p });
        assert_eq!(two.dt_max(0.0, 0.0, &ControlPoint::IDLE), 1e-9);
    }
}
