use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::schedule::Marker;

/// Output-field moments in photon-flux units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputMoments {
    pub i: f64,
    pub q: f64,
    pub power: f64,
}

pub(crate) fn moments_of_vec(x: &[C64], dim: usize, gamma1: f64) -> OutputMoments {
    // ⟨b⟩ = Σ_j √j ρ_{j, j−1}; ρ_{i,j} sits at i + j·dim.
    let mut b = C64::new(0.0, 0.0);
    let mut n = 0.0;
    for j in 1..dim {
        b += x[j + (j - 1) * dim] * (j as f64).sqrt();
        n += j as f64 * x[j + j * dim].re;
    }
    let s = gamma1.max(0.0).sqrt();
    OutputMoments {
        i: s * 2.0 * b.re,
        q: -s * 2.0 * b.im,
        power: (gamma1 * n).max(0.0),
    }
}

/// I = √Γ₁·2Re⟨b⟩, Q = −√Γ₁·2Im⟨b⟩, P = Γ₁⟨b†b⟩.
pub fn output_moments(state: &DensityMatrix, gamma1_now: f64) -> OutputMoments {
    moments_of_vec(state.matrix().as_slice(), state.dim(), gamma1_now)
}

/// Angle of the principal axis of the (I, Q) samples, oriented so that the
/// projected signal sums to a non-negative value.
pub fn principal_angle(i: &[f64], q: &[f64]) -> f64 {
    let (mut sii, mut sqq, mut siq) = (0.0, 0.0, 0.0);
    for (a, b) in i.iter().zip(q) {
        sii += a * a;
        sqq += b * b;
        siq += a * b;
    }
    let mut theta = 0.5 * (2.0 * siq).atan2(sii - sqq);
    let (s, c) = theta.sin_cos();
    let along: f64 = i.iter().zip(q).map(|(a, b)| a * c + b * s).sum();
    if along < 0.0 {
        theta += std::f64::consts::PI;
    }
    theta
}

/// Rotates sample pairs by −θ in place.
pub fn rotate_quadratures(i: &mut [f64], q: &mut [f64], theta: f64) {
    let (s, c) = theta.sin_cos();
    for (a, b) in i.iter_mut().zip(q.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = x * c + y * s;
        *b = y * c - x * s;
    }
}

/// Sampled trajectory of a schedule run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub t: Vec<f64>,
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub power: Vec<f64>,
    /// Level populations per sample.
    pub populations: Vec<Vec<f64>>,
    pub gamma1: Vec<f64>,
    pub flux: Vec<f64>,
    pub markers: Vec<Marker>,
    /// ∫ Γ₁⟨b†b⟩ dt over the whole run.
    pub emitted_photons: f64,
    /// ∫ (Γ₁,ᵢ + Γ_exc)⟨b†b⟩ dt over the whole run.
    pub intrinsic_loss: f64,
    /// Quadrature rotation applied so far (rad).
    pub rotation: f64,
    pub steps: usize,
}

impl EmissionRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Rotates (I, Q) by −θ, i.e. I + iQ → (I + iQ)e^{−iθ}.
    pub fn rotate(&mut self, theta: f64) {
        rotate_quadratures(&mut self.i, &mut self.q, theta);
        self.rotation += theta;
    }

    /// Rotates the quadratures so that the signal lies along +I as far as
    /// possible. Returns the angle.
    pub fn rotate_to_i(&mut self) -> f64 {
        let theta = principal_angle(&self.i, &self.q);
        self.rotate(theta);
        theta
    }

    pub fn peak_power(&self) -> f64 {
        self.power.iter().cloned().fold(0.0, f64::max)
    }
}
