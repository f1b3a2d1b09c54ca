//! A complete device: mirror/coupling model plus transmon parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryModel, CouplingParams, FluxBias, LineParams, SquidParams};
use crate::constants::{angular, PLANCK};
use crate::dynamics::{DephasingTable, TransmonParams};
use crate::error::{Error, Result};

/// Names accepted by [`Device::preset`].
pub const PRESETS: [&str; 2] = ["paper2017", "paper2017-estimated"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub boundary: BoundaryModel,
    pub transmon: TransmonParams,
}

/// Line geometry: qubit 9.49 mm from the SQUID, which sits a quarter
/// wavelength plus 22 % of a quarter wavelength away at 3.690 GHz.
const X_QUBIT: f64 = 9.49e-3;
const F01: f64 = 3.690e9;

fn phase_velocity() -> f64 {
    4.0 * X_QUBIT / 1.22 * F01
}

fn transmon() -> TransmonParams {
    let t1_i = 2.86e-6;
    let t2_i = 1.33e-6;
    let mhz = |x: f64| angular(x * 1e6);
    TransmonParams {
        omega01: angular(F01),
        alpha: angular(-141.7e6),
        levels: 3,
        gamma1_intrinsic: 1.0 / t1_i,
        gammaphi_intrinsic: 1.0 / t2_i - 0.5 / t1_i,
        // Excess over the intrinsic rate: saturates near integer flux,
        // vanishes at the decoupling point, and reproduces T₂* = 370 ns
        // near half flux.
        gammaphi_flux: DephasingTable::new(vec![
            (0.0, mhz(0.608)),
            (0.1, mhz(0.608)),
            (0.39, 0.0),
            (0.45, mhz(0.2316)),
            (0.5, mhz(0.2316)),
        ])
        .expect("static table"),
        t_eff: 0.090,
        gamma_excitation_line: 0.0,
    }
}

impl Device {
    /// Fitted device. The line impedance and phase offset are calibrated so
    /// that Γ₁(0)/2π = 1.9 MHz and the first zero sits at 0.39 Φ₀ with the
    /// quoted junction currents and capacitances.
    pub fn paper2017() -> Self {
        let z0 = 46.325_227_081_420_75;
        let v = phase_velocity();
        let e_j = PLANCK * 12.9e9;
        Device {
            boundary: BoundaryModel {
                line: LineParams {
                    z0,
                    v,
                    l0: z0 / v,
                    x_qubit: X_QUBIT,
                },
                squid: SquidParams {
                    ic1: 30e-9,
                    ic2: 46e-9,
                    c_sq: 33e-15,
                    mutual: 4e-12,
                },
                coupling: CouplingParams {
                    c_s: 31e-15,
                    c_sigma: 136e-15,
                    e_j,
                    e_c: e_j / 91.0,
                    phi_off: -0.144_599_085_902_718_84,
                },
                omega01: angular(F01),
            },
            transmon: transmon(),
        }
    }

    /// Design estimate: 28 fF coupling capacitance on a 50 Ω line, with the
    /// qubit at the geometric position (no extra phase offset).
    pub fn paper2017_estimated() -> Self {
        let mut d = Self::paper2017();
        let line = &mut d.boundary.line;
        line.z0 = 50.0;
        line.l0 = line.z0 / line.v;
        d.boundary.coupling.c_s = 28e-15;
        d.boundary.coupling.phi_off = 0.5 * PI - d.boundary.omega01 * X_QUBIT / line.v;
        d
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper2017" => Ok(Self::paper2017()),
            "paper2017-estimated" => Ok(Self::paper2017_estimated()),
            _ => Err(Error::Config {
                path: "profile".into(),
                message: format!("unknown profile `{name}` (known: {})", PRESETS.join(", ")),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.boundary.validate()?;
        self.transmon.validate()?;
        if (self.boundary.omega01 - self.transmon.omega01).abs() > 1e-9 * self.transmon.omega01 {
            return Err(Error::param("omega01", "boundary and transmon frequencies differ"));
        }
        Ok(())
    }

    pub fn gamma1(&self, flux: f64) -> f64 {
        self.boundary.emission_rate_or_zero(flux)
    }

    /// Maximum of Γ₁ over a flux period and the flux where it occurs in [0, 1/2].
    pub fn gamma1_peak(&self) -> (f64, f64) {
        let n = 1000;
        let (mut best_f, mut best) = (0.0, self.gamma1(0.0));
        for k in 1..=n {
            let f = 0.5 * k as f64 / n as f64;
            let g = self.gamma1(f);
            if g > best {
                best = g;
                best_f = f;
            }
        }
        // Golden-section refinement around the grid maximum.
        let h = 0.5 / n as f64;
        let (mut a, mut b) = ((best_f - h).max(0.0), (best_f + h).min(0.5));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if self.gamma1(c) > self.gamma1(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let f = 0.5 * (a + b);
        let g = self.gamma1(f);
        if g > best {
            (f, g)
        } else {
            (best_f, best)
        }
    }

    /// Flux where emission is switched off.
    pub fn decoupling_flux(&self) -> Result<f64> {
        self.boundary.decoupling_flux().ok_or(Error::param(
            "boundary",
            "the spectral density has no node within a flux period",
        ))
    }

    /// Γ₁(Φ) sampled on a uniform grid over one period.
    pub fn flux_curve(&self, step: f64) -> Vec<(f64, f64)> {
        let n = (1.0 / step).round() as usize;
        (0..=n)
            .map(|k| {
                let f = k as f64 / n as f64;
                (f, self.boundary.emission_rate(FluxBias(f)).unwrap_or(0.0))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::cyclic;

    #[test]
    fn fitted_preset_reproduces_curve_landmarks() {
        let d = Device::paper2017();
        d.validate().unwrap();
        assert!((cyclic(d.gamma1(0.0)) - 1.9e6).abs() < 1e3);
        assert!((d.decoupling_flux().unwrap() - 0.39).abs() < 1e-9);
        assert_eq!(Device::preset("paper2017").unwrap(), d);
        assert!(Device::preset("nope").is_err());
    }

    #[test]
    fn estimated_preset_has_ideal_antinode_rate() {
        let d = Device::paper2017_estimated();
        d.validate().unwrap();
        let ideal = cyclic(d.boundary.ideal_max_rate());
        assert!((ideal - 26e6).abs() < 0.5e6, "{ideal}");
    }
}
