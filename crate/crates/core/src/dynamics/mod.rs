//! Driven, damped transmon: a truncated Duffing ladder evolving under a
//! time-dependent Lindblad generator whose radiative rate follows the SQUID
//! flux, plus the output-field moments it radiates into the line.

mod generator;
mod hamiltonian;
mod integrate;
mod pulse;
mod record;
mod run;

use serde::{Deserialize, Serialize};

use crate::boundary::FluxBias;
use crate::constants::bose_occupation;
use crate::error::{Error, Result};

pub use generator::{ConstantControls, ControlPoint, Controls, Generator};
pub use hamiltonian::{build_hamiltonian, lowering_operator, number_operator};
pub use integrate::{inner, integrated_signal_functional, lindblad_step, AdjointSource, Evolver, StepAccumulators};
pub use pulse::{DrivePulse, Envelope};
pub use record::{output_moments, principal_angle, rotate_quadratures, EmissionRecord, OutputMoments};
pub use run::{run_schedule, run_schedule_from, RecordOptions, ScheduleControls};

/// Linear interpolation table of the flux-dependent excess pure dephasing.
/// Flux is folded into [0, 1/2] before lookup; rates are in rad/s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DephasingTable {
    points: Vec<(f64, f64)>,
}

impl DephasingTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        for &(f, g) in &points {
            if !(0.0..=0.5).contains(&f) {
                return Err(Error::param("gammaphi_flux", format!("flux {f} outside [0, 0.5]")));
            }
            if !(g >= 0.0) {
                return Err(Error::param("gammaphi_flux", format!("negative rate {g}")));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(DephasingTable { points })
    }

    pub fn empty() -> Self {
        DephasingTable::default()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn rate(&self, flux: f64) -> f64 {
        let f = FluxBias(flux).folded();
        let p = &self.points;
        match p.len() {
            0 => 0.0,
            1 => p[0].1,
            _ => {
                if f <= p[0].0 {
                    return p[0].1;
                }
                if f >= p[p.len() - 1].0 {
                    return p[p.len() - 1].1;
                }
                let k = p.partition_point(|&(x, _)| x <= f);
                let (x0, y0) = p[k - 1];
                let (x1, y1) = p[k];
                y0 + (y1 - y0) * (f - x0) / (x1 - x0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    /// Qubit transition angular frequency (rad/s).
    pub omega01: f64,
    /// Anharmonicity (rad/s, negative for a transmon).
    pub alpha: f64,
    /// Number of retained levels.
    pub levels: usize,
    /// Non-radiative relaxation rate (1/s).
    pub gamma1_intrinsic: f64,
    /// Intrinsic pure dephasing rate (1/s).
    pub gammaphi_intrinsic: f64,
    /// Flux-dependent excess pure dephasing.
    pub gammaphi_flux: DephasingTable,
    /// Effective temperature of all baths (K).
    pub t_eff: f64,
    /// Relaxation into the excitation line (1/s).
    pub gamma_excitation_line: f64,
}

impl TransmonParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::param("levels", "need at least 2 levels"));
        }
        if !(self.omega01 > 0.0) {
            return Err(Error::param("omega01", "must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        for (name, v) in [
            ("gamma1_intrinsic", self.gamma1_intrinsic),
            ("gammaphi_intrinsic", self.gammaphi_intrinsic),
            ("t_eff", self.t_eff),
            ("gamma_excitation_line", self.gamma_excitation_line),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Thermal occupation n̄ of the baths at ω₀₁.
    pub fn thermal_occupation(&self) -> f64 {
        bose_occupation(self.omega01, self.t_eff)
    }

    /// Total pure dephasing at the given flux.
    pub fn gammaphi_total(&self, flux: f64) -> f64 {
        self.gammaphi_intrinsic + self.gammaphi_flux.rate(flux)
    }

    /// Same parameters with every dissipative channel and the temperature
    /// switched off.
    pub fn without_dissipation(&self) -> Self {
        TransmonParams {
            gamma1_intrinsic: 0.0,
            gammaphi_intrinsic: 0.0,
            gammaphi_flux: DephasingTable::empty(),
            t_eff: 0.0,
            gamma_excitation_line: 0.0,
            ..self.clone()
        }
    }
}
