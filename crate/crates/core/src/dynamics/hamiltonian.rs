use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{DrivePulse, TransmonParams};

/// Truncated annihilation operator b with b|j⟩ = √j |j−1⟩.
pub fn lowering_operator(dim: usize) -> DMatrix<C64> {
    let mut b = DMatrix::zeros(dim, dim);
    for j in 1..dim {
        b[(j - 1, j)] = C64::new((j as f64).sqrt(), 0.0);
    }
    b
}

pub fn number_operator(dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(i as f64, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Duffing diagonal (α/2) j(j−1) plus `detuning`·j, in rad/s.
pub(crate) fn duffing_diagonal(dim: usize, alpha: f64, detuning: f64) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let j = j as f64;
            j * detuning + 0.5 * alpha * j * (j - 1.0)
        })
        .collect()
}

/// H/ħ (rad/s) in the frame rotating at the drive frequency of `drive`:
/// Σ_j [jδ + (α/2)j(j−1)]|j⟩⟨j| + (Ω(t)/2)(e^{−iφ} b† + e^{iφ} b).
pub fn build_hamiltonian(params: &TransmonParams, drive: &DrivePulse, t: f64) -> DMatrix<C64> {
    let d = params.levels;
    let diag = duffing_diagonal(d, params.alpha, drive.carrier_detuning);
    let mut h = DMatrix::zeros(d, d);
    for (j, e) in diag.iter().enumerate() {
        h[(j, j)] = C64::new(*e, 0.0);
    }
    let omega = drive.amplitude_at(t);
    if omega != 0.0 {
        let b = lowering_operator(d);
        let c = C64::from_polar(0.5 * omega, drive.phase);
        h += b.map(|x| x * c) + b.adjoint().map(|x| x * c.conj());
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DephasingTable;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(levels: usize) -> TransmonParams {
        TransmonParams {
            omega01: 2.0 * PI * 3.690e9,
            alpha: 2.0 * PI * -141.7e6,
            levels,
            gamma1_intrinsic: 0.0,
            gammaphi_intrinsic: 0.0,
            gammaphi_flux: DephasingTable::empty(),
            t_eff: 0.0,
            gamma_excitation_line: 0.0,
        }
    }

    #[test]
    fn undriven_resonant_diagonal() {
        let p = params(4);
        let h = build_hamiltonian(&p, &DrivePulse::square(0.0, 0.0, 1.0), 0.5);
        let a = p.alpha;
        let expected = [0.0, 0.0, a, 3.0 * a];
        for j in 0..4 {
            assert_relative_eq!(h[(j, j)].re, expected[j], max_relative = 1e-14);
        }
        // |2⟩ sits α away from two-photon resonance: E₂ − 2E₁ = α.
        assert_relative_eq!(
            (h[(2, 2)].re - 2.0 * h[(1, 1)].re) / (2.0 * PI),
            -141.7e6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn two_level_rabi_splitting() {
        let p = params(2);
        let omega = 2.0 * PI * 10e6;
        let h = build_hamiltonian(&p, &DrivePulse::square(omega, 0.0, 1.0), 0.5);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], -omega / 2.0, max_relative = 1e-12);
        assert_relative_eq!(ev[1], omega / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn hermitian_with_phase() {
        let p = params(3);
        let h = build_hamiltonian(&p, &DrivePulse::square(1e8, 0.0, 1.0).with_phase(0.7), 0.1);
        assert!((&h - h.adjoint()).norm() < 1e-9);
    }
}
