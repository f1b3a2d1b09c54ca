//! Truncated transmon density matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::constants::{BOLTZMANN, HBAR};
use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Density matrix over the lowest `dim` transmon levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        let rho = DensityMatrix { m };
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without validation. Intended for intermediate results
    /// that are checked later.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        DensityMatrix { m }
    }

    pub fn basis(dim: usize, level: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(level, level)] = C64::new(1.0, 0.0);
        DensityMatrix { m }
    }

    pub fn ground(dim: usize) -> Self {
        Self::basis(dim, 0)
    }

    /// |ψ⟩⟨ψ| for a normalised amplitude vector (normalised here).
    pub fn pure(amplitudes: &[C64]) -> Self {
        let v = DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        let v = v / C64::new(norm, 0.0);
        DensityMatrix { m: &v * v.adjoint() }
    }

    pub fn from_diagonal(populations: &[f64]) -> Self {
        let d = populations.len();
        let mut m = DMatrix::zeros(d, d);
        for (k, &p) in populations.iter().enumerate() {
            m[(k, k)] = C64::new(p, 0.0);
        }
        DensityMatrix { m }
    }

    /// Boltzmann state of a Duffing ladder with level energies
    /// ħ[jω₀₁ + (α/2) j(j−1)] at temperature `kelvin`.
    pub fn thermal(dim: usize, omega01: f64, alpha: f64, kelvin: f64) -> Self {
        if kelvin <= 0.0 {
            return Self::ground(dim);
        }
        let weights: Vec<f64> = (0..dim)
            .map(|j| {
                let j = j as f64;
                let e = HBAR * (j * omega01 + 0.5 * alpha * j * (j - 1.0));
                (-e / (BOLTZMANN * kelvin)).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        Self::from_diagonal(&weights.iter().map(|w| w / z).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn population(&self, level: usize) -> f64 {
        self.m[(level, level)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.m[(k, k)].re).collect()
    }

    /// Column-stacked vectorisation, index i + j·d for element (i, j).
    pub fn to_vec(&self) -> Vec<C64> {
        self.m.as_slice().to_vec()
    }

    pub fn from_vec(dim: usize, v: &[C64]) -> Self {
        DensityMatrix {
            m: DMatrix::from_column_slice(dim, dim, v),
        }
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_square() {
            return Err(Error::NotDensityMatrix("not square".into()));
        }
        let herm = (&self.m - self.m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > HERMITICITY_TOL {
            return Err(Error::NotDensityMatrix(format!("non-Hermitian by {herm:e}")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::NotDensityMatrix(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::NotDensityMatrix(format!("eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Embeds into a larger space (zero padding) or truncates to `dim`.
    pub fn resized(&self, dim: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        let n = dim.min(self.dim());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.m[(i, j)];
            }
        }
        DensityMatrix { m }
    }
}

/// Square root of a positive semidefinite Hermitian matrix through its
/// eigendecomposition; eigenvalues below zero are floored at zero.
pub fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&roots) * u.adjoint()
}
