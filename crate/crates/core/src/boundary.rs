//! SQUID-terminated transmission line: reflection phase of the tunable
//! mirror, vacuum spectral density at the qubit and the resulting radiative
//! decay rate.
//!
//! Flux enters every public function in units of the flux quantum. All other
//! quantities are SI, with frequencies as angular frequencies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, FLUX_QUANTUM, HBAR};
use crate::error::{Error, Result};

/// Relative floor below which the SQUID is treated as an open circuit.
const MIN_CRITICAL_CURRENT: f64 = 1e-12;

/// Flux through the SQUID loop in units of Φ₀.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FluxBias(pub f64);

impl FluxBias {
    pub fn phi0(self) -> f64 {
        self.0
    }

    /// Folds the flux into [0, 1/2] using Φ₀-periodicity and the even symmetry
    /// of the SQUID modulation.
    pub fn folded(self) -> f64 {
        let r = self.0.rem_euclid(1.0);
        if r > 0.5 {
            1.0 - r
        } else {
            r
        }
    }
}

impl From<f64> for FluxBias {
    fn from(v: f64) -> Self {
        FluxBias(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Characteristic impedance (Ω).
    pub z0: f64,
    /// Phase velocity (m/s).
    pub v: f64,
    /// Inductance per unit length (H/m).
    pub l0: f64,
    /// Qubit distance from the SQUID end of the line (m).
    pub x_qubit: f64,
}

impl LineParams {
    pub fn validate(&self) -> Result<()> {
        positive("z0", self.z0)?;
        positive("v", self.v)?;
        positive("l0", self.l0)?;
        positive("x_qubit", self.x_qubit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquidParams {
    /// Critical current of junction 1 (A).
    pub ic1: f64,
    /// Critical current of junction 2 (A).
    pub ic2: f64,
    /// Total SQUID capacitance (F).
    pub c_sq: f64,
    /// Mutual inductance between bias line and SQUID loop (H).
    pub mutual: f64,
}

impl SquidParams {
    pub fn validate(&self) -> Result<()> {
        positive("ic1", self.ic1)?;
        positive("ic2", self.ic2)?;
        positive("c_sq", self.c_sq)?;
        positive("mutual", self.mutual)
    }

    /// Junction asymmetry d = |I₁ − I₂| / (I₁ + I₂).
    pub fn asymmetry(&self) -> f64 {
        (self.ic1 - self.ic2).abs() / (self.ic1 + self.ic2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Qubit–line coupling capacitance (F).
    pub c_s: f64,
    /// Total qubit capacitance (F).
    pub c_sigma: f64,
    /// Josephson energy (J).
    pub e_j: f64,
    /// Charging energy (J).
    pub e_c: f64,
    /// Phase offset absorbing the line-length mismatch (rad).
    pub phi_off: f64,
}

impl CouplingParams {
    pub fn validate(&self) -> Result<()> {
        positive("c_s", self.c_s)?;
        if self.c_sigma <= self.c_s {
            return Err(Error::param("c_sigma", "must exceed c_s"));
        }
        positive("e_j", self.e_j)?;
        positive("e_c", self.e_c)?;
        if !self.phi_off.is_finite() {
            return Err(Error::param("phi_off", "must be finite"));
        }
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

/// Maximum supercurrent of an asymmetric dc SQUID at the given flux.
pub fn effective_critical_current(flux: FluxBias, sq: &SquidParams) -> f64 {
    let x = PI * flux.0;
    let d = sq.asymmetry();
    let (s, c) = x.sin_cos();
    (sq.ic1 + sq.ic2) * (c * c + d * d * s * s).sqrt()
}

/// Josephson inductance Φ₀/(2π I_C(Φ)).
pub fn squid_inductance(flux: FluxBias, sq: &SquidParams) -> Result<f64> {
    let ic = effective_critical_current(flux, sq);
    if !(ic > MIN_CRITICAL_CURRENT * (sq.ic1 + sq.ic2)) {
        return Err(Error::DegenerateFlux { flux: flux.0 });
    }
    Ok(FLUX_QUANTUM / (2.0 * PI * ic))
}

/// Reflection phase in (0, π] of a parallel LC shunt (inductance `l_sq`,
/// capacitance `c_sq`) terminating a line of impedance `z0`.
///
/// Numerator and denominator of the tangent are kept apart and resolved with
/// `atan2`, so the phase moves continuously from π (short) to 0 (open).
/// Above the shunt plasma frequency the termination is capacitive and the
/// phase leaves (0, π]; that regime is rejected.
pub fn shunt_reflection_phase(omega: f64, l_sq: f64, c_sq: f64, z0: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::param("omega", "must be positive"));
    }
    if l_sq == 0.0 {
        return Ok(PI);
    }
    if l_sq.is_infinite() {
        return Ok(0.0);
    }
    // a = (Z₀/ωL)[1 − (ω/ω_SQ)²]
    let a = z0 / (omega * l_sq) * (1.0 - omega * omega * l_sq * c_sq);
    if a < 0.0 {
        return Err(Error::param(
            "omega",
            "above the SQUID plasma frequency (capacitive termination)",
        ));
    }
    if a.is_infinite() {
        return Ok(PI);
    }
    let phi = (2.0 * a).atan2(1.0 - a * a);
    Ok(phi)
}

pub fn reflection_phase(flux: FluxBias, omega: f64, line: &LineParams, sq: &SquidParams) -> Result<f64> {
    let l = squid_inductance(flux, sq)?;
    shunt_reflection_phase(omega, l, sq.c_sq, line.z0)
}

/// Extra phase of the finite SQUID impedance, π − φ, in [0, π).
pub fn squid_phase(flux: FluxBias, omega: f64, line: &LineParams, sq: &SquidParams) -> Result<f64> {
    Ok(PI - reflection_phase(flux, omega, line, sq)?)
}

/// Additional electrical length equivalent to the SQUID phase.
pub fn effective_length(flux: FluxBias, omega: f64, line: &LineParams, sq: &SquidParams) -> Result<f64> {
    let phi_sq = squid_phase(flux, omega, line, sq)?;
    Ok(phi_sq * line.v / (2.0 * omega))
}

/// Round-trip phase θ_T = π − φ_SQ − 2ωx/v of a wave travelling from the
/// qubit position to the SQUID and back.
pub fn round_trip_phase(flux: FluxBias, omega: f64, x: f64, line: &LineParams, sq: &SquidParams) -> Result<f64> {
    let phi_sq = squid_phase(flux, omega, line, sq)?;
    Ok(round_trip_from_parts(phi_sq, omega, x, line.v))
}

pub fn round_trip_from_parts(phi_sq: f64, omega: f64, x: f64, v: f64) -> f64 {
    PI - phi_sq - 2.0 * omega * x / v
}

/// A standing-wave voltage node sits at the qubit when θ_T ≡ π (mod 2π).
pub fn is_voltage_node(theta_t: f64, tolerance: f64) -> bool {
    (theta_t.rem_euclid(2.0 * PI) - PI).abs() < tolerance
}

/// Vacuum spectral density 2ħω cos²(φ_SQ/2 − φ_off).
pub fn spectral_density_from_phase(omega: f64, phi_sq: f64, phi_off: f64) -> f64 {
    let c = (0.5 * phi_sq - phi_off).cos();
    2.0 * HBAR * omega * c * c
}

pub fn spectral_density(
    flux: FluxBias,
    omega: f64,
    coupling: &CouplingParams,
    line: &LineParams,
    sq: &SquidParams,
) -> Result<f64> {
    let phi_sq = squid_phase(flux, omega, line, sq)?;
    Ok(spectral_density_from_phase(omega, phi_sq, coupling.phi_off))
}

/// Prefactor Z₀(e/ħ)²(C_s/C_Σ)²√(E_J/2E_C) multiplying S(ω₀₁) in the
/// radiative decay rate. Units: 1/(J s²)·s = rad/s per unit of S.
pub fn emission_prefactor(coupling: &CouplingParams, line: &LineParams) -> f64 {
    let ratio = coupling.c_s / coupling.c_sigma;
    let e_over_hbar = ELEMENTARY_CHARGE / HBAR;
    line.z0 * e_over_hbar * e_over_hbar * ratio * ratio * (coupling.e_j / (2.0 * coupling.e_c)).sqrt()
}

/// Radiative decay rate Γ₁ of the qubit into the line (rad/s).
pub fn emission_rate(
    flux: FluxBias,
    coupling: &CouplingParams,
    line: &LineParams,
    sq: &SquidParams,
    omega01: f64,
) -> Result<f64> {
    let s = spectral_density(flux, omega01, coupling, line, sq)?;
    Ok(emission_prefactor(coupling, line) * s)
}

/// Position x equivalent to a phase offset, i.e. the x for which the
/// geometric form of the spectral density coincides with the offset form.
/// Reduced modulo λ/2.
pub fn equivalent_position(phi_off: f64, omega: f64, v: f64) -> f64 {
    let half_wavelength = PI * v / omega;
    ((0.5 * PI - phi_off) * v / omega).rem_euclid(half_wavelength)
}

/// Complete mirror + coupling model with the qubit frequency it is probed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryModel {
    pub line: LineParams,
    pub squid: SquidParams,
    pub coupling: CouplingParams,
    /// Qubit transition angular frequency (rad/s).
    pub omega01: f64,
}

impl BoundaryModel {
    pub fn validate(&self) -> Result<()> {
        self.line.validate()?;
        self.squid.validate()?;
        self.coupling.validate()?;
        positive("omega01", self.omega01)
    }

    pub fn squid_phase(&self, flux: FluxBias) -> Result<f64> {
        squid_phase(flux, self.omega01, &self.line, &self.squid)
    }

    pub fn emission_rate(&self, flux: FluxBias) -> Result<f64> {
        emission_rate(flux, &self.coupling, &self.line, &self.squid, self.omega01)
    }

    /// Γ₁ with degenerate or capacitive points mapped to zero coupling.
    /// Meant for time-domain control where the flux may sweep such points.
    pub fn emission_rate_or_zero(&self, flux: f64) -> f64 {
        self.emission_rate(FluxBias(flux)).unwrap_or(0.0)
    }

    /// Upper bound Γ₁ at S = 2ħω₀₁, i.e. an ideal voltage antinode.
    pub fn ideal_max_rate(&self) -> f64 {
        emission_prefactor(&self.coupling, &self.line) * 2.0 * HBAR * self.omega01
    }

    /// Flux in (0, 1/2) where the spectral density at ω₀₁ vanishes, found by
    /// bisection on the monotone SQUID phase. `None` when the node is never
    /// reached within a half period.
    pub fn decoupling_flux(&self) -> Option<f64> {
        let phase = |f: f64| self.squid_phase(FluxBias(f)).ok();
        let p_lo = phase(0.0)?;
        // Stay a hair inside 1/2 so symmetric SQUIDs do not hit the open circuit.
        let hi_flux = 0.5 - 1e-12;
        let p_hi = phase(hi_flux)?;
        // Zero of cos(φ/2 − φ_off): φ = 2(φ_off + π/2 + nπ).
        let base = 2.0 * (self.coupling.phi_off + 0.5 * PI);
        let n_min = ((p_lo - base) / (2.0 * PI)).ceil() as i64;
        let target = base + 2.0 * PI * n_min as f64;
        if target > p_hi || target < p_lo {
            return None;
        }
        let (mut lo, mut hi) = (0.0, hi_flux);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match phase(mid) {
                Some(p) if p < target => lo = mid,
                _ => hi = mid,
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Bias-line current producing the given flux through the mutual inductance.
    pub fn current_for_flux(&self, flux: f64) -> f64 {
        flux * FLUX_QUANTUM / self.squid.mutual
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn squid() -> SquidParams {
        SquidParams {
            ic1: 30e-9,
            ic2: 46e-9,
            c_sq: 33e-15,
            mutual: 4e-12,
        }
    }

    fn line(z0: f64) -> LineParams {
        LineParams {
            z0,
            v: 1.148e8,
            l0: z0 / 1.148e8,
            x_qubit: 9.49e-3,
        }
    }

    const OMEGA01: f64 = 2.0 * PI * 3.690e9;

    #[test]
    fn critical_current_landmarks() {
        let sq = squid();
        assert_relative_eq!(
            effective_critical_current(FluxBias(0.0), &sq),
            76e-9,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            effective_critical_current(FluxBias(0.5), &sq),
            16e-9,
            max_relative = 1e-12
        );
        let quarter = ((76.0f64.powi(2) + 16.0f64.powi(2)) / 2.0).sqrt() * 1e-9;
        assert_relative_eq!(
            effective_critical_current(FluxBias(0.25), &sq),
            quarter,
            max_relative = 1e-12
        );
    }

    #[test]
    fn critical_current_matches_brute_force_phase_maximisation() {
        // Two junction current-phase relations; the loop fixes their phase
        // difference to 2πΦ. Maximise the sum over the free phase.
        let sq = squid();
        for &f in &[0.0, 0.1, 0.25, 0.39, 0.5, 0.77] {
            let n = 200_000;
            let best = (0..n)
                .map(|k| {
                    let d = 2.0 * PI * k as f64 / n as f64;
                    sq.ic1 * d.sin() + sq.ic2 * (d + 2.0 * PI * f).sin()
                })
                .fold(f64::MIN, f64::max);
            assert_relative_eq!(effective_critical_current(FluxBias(f), &sq), best, max_relative = 1e-8);
        }
    }

    #[test]
    fn inductance_at_zero_flux_and_periodicity() {
        let sq = squid();
        let l0 = squid_inductance(FluxBias(0.0), &sq).unwrap();
        assert_relative_eq!(l0, FLUX_QUANTUM / (2.0 * PI * 76e-9), max_relative = 1e-12);
        assert_relative_eq!(l0, 4.330e-9, max_relative = 1e-3);
        let l1 = squid_inductance(FluxBias(1.0), &sq).unwrap();
        assert_relative_eq!(l0, l1, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_squid_at_half_flux_is_degenerate() {
        let sq = SquidParams {
            ic1: 40e-9,
            ic2: 40e-9,
            ..squid()
        };
        assert!(matches!(
            squid_inductance(FluxBias(0.5), &sq),
            Err(Error::DegenerateFlux { .. })
        ));
    }

    #[test]
    fn reflection_phase_limits() {
        assert_eq!(shunt_reflection_phase(OMEGA01, 0.0, 33e-15, 50.0).unwrap(), PI);
        let open = shunt_reflection_phase(OMEGA01, 1e-3, 1e-30, 50.0).unwrap();
        assert!(open < 1e-3 && open > 0.0);
    }

    #[test]
    fn reflection_phase_golden_values() {
        // Independent high-precision evaluation (30 digits) of the shunt formula.
        let l = line(50.0);
        let p0 = reflection_phase(FluxBias(0.0), OMEGA01, &l, &squid()).unwrap();
        assert_relative_eq!(p0, 0.861_879_410_496_271_2, max_relative = 1e-12);
        let s39 = squid_phase(FluxBias(0.39), OMEGA01, &l, &squid()).unwrap();
        assert_relative_eq!(s39, 2.829_810_288_012_577, max_relative = 1e-12);
        let s0 = squid_phase(FluxBias(0.0), OMEGA01, &l, &squid()).unwrap();
        assert_relative_eq!(s0, 2.279_713_243_093_522, max_relative = 1e-12);
        let le = effective_length(FluxBias(0.0), OMEGA01, &l, &squid()).unwrap();
        assert_relative_eq!(le, s0 * l.v / (2.0 * OMEGA01), max_relative = 1e-14);
    }

    #[test]
    fn small_inductance_limit() {
        let z0 = 50.0;
        let l_sq = 1e-3 * z0 / OMEGA01;
        let phi_sq = PI - shunt_reflection_phase(OMEGA01, l_sq, 0.0, z0).unwrap();
        assert_relative_eq!(phi_sq, 2e-3, max_relative = 1e-3);
        let l = line(z0);
        let l_eff = phi_sq * l.v / (2.0 * OMEGA01);
        assert_relative_eq!(l_eff / (l_sq / l.l0), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn node_conditions() {
        let v = 1.148e8;
        let lambda = 2.0 * PI * v / OMEGA01;
        let t = round_trip_from_parts(0.0, OMEGA01, lambda / 2.0, v);
        assert_relative_eq!(t, -PI, epsilon = 1e-12);
        assert!(is_voltage_node(t, 1e-9));
        let t = round_trip_from_parts(PI, OMEGA01, lambda / 4.0, v);
        assert_relative_eq!(t, -PI, epsilon = 1e-12);
        assert!(is_voltage_node(t, 1e-9));
        assert!(!is_voltage_node(0.0, 0.1));
    }

    #[test]
    fn spectral_density_extremes() {
        let w = OMEGA01;
        assert_relative_eq!(
            spectral_density_from_phase(w, 0.6, 0.3),
            2.0 * HBAR * w,
            max_relative = 1e-14
        );
        assert!(spectral_density_from_phase(w, 0.6 + PI, 0.3) < 1e-20 * HBAR * w);
    }

    #[test]
    fn ideal_rate_with_estimated_capacitance() {
        let e_j = crate::constants::PLANCK * 12.9e9;
        let coupling = CouplingParams {
            c_s: 28e-15,
            c_sigma: 136e-15,
            e_j,
            e_c: e_j / 91.0,
            phi_off: 0.0,
        };
        let g = emission_prefactor(&coupling, &line(50.0)) * 2.0 * HBAR * OMEGA01;
        assert_relative_eq!(g / (2.0 * PI), 26e6, max_relative = 0.02);
    }

    #[test]
    fn equivalent_position_reproduces_offset_form() {
        let v = 1.148e8;
        let phi_off = -0.1446;
        let x = equivalent_position(phi_off, OMEGA01, v);
        for &phi_sq in &[0.3, 1.1, 2.5] {
            let geometric = (0.5 * PI - OMEGA01 * x / v - 0.5 * phi_sq).cos().powi(2);
            let offset = (0.5 * phi_sq - phi_off).cos().powi(2);
            assert_relative_eq!(geometric, offset, epsilon = 1e-12);
        }
    }

    // Units bookkeeping for Γ₁ = Z₀ (e/ħ)² (C_s/C_Σ)² √(E_J/2E_C) S,
    // exponents of (kg, m, s, A).
    #[derive(Debug, Clone, Copy, PartialEq)]
    struct Dim([i32; 4]);
    impl std::ops::Mul for Dim {
        type Output = Dim;
        fn mul(self, o: Dim) -> Dim {
            Dim([0, 1, 2, 3].map(|i| self.0[i] + o.0[i]))
        }
    }
    impl std::ops::Div for Dim {
        type Output = Dim;
        fn div(self, o: Dim) -> Dim {
            Dim([0, 1, 2, 3].map(|i| self.0[i] - o.0[i]))
        }
    }

    #[test]
    fn emission_rate_is_an_inverse_time() {
        let ohm = Dim([1, 2, -3, -2]);
        let coulomb = Dim([0, 0, 1, 1]);
        let joule = Dim([1, 2, -2, 0]);
        let second = Dim([0, 0, 1, 0]);
        let farad = coulomb * coulomb / joule;
        let dimensionless = Dim([0; 4]);
        let hbar = joule * second;
        let e_over_hbar = coulomb / hbar;
        assert_eq!(farad / farad, dimensionless);
        assert_eq!(joule / joule, dimensionless);
        // S carries ħω: J s · 1/s = J.
        let s_density = hbar / second;
        let rate = ohm * e_over_hbar * e_over_hbar * s_density;
        assert_eq!(rate, dimensionless / second);
    }
}
