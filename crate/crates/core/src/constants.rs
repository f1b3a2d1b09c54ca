//! Physical constants (exact SI values since the 2019 redefinition).

use std::f64::consts::PI;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Superconducting flux quantum h/2e (Wb).
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Converts a frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn cyclic(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}

/// Bose-Einstein occupation of a mode at angular frequency `omega` and
/// temperature `kelvin`. Zero at zero temperature.
pub fn bose_occupation(omega: f64, kelvin: f64) -> f64 {
    if kelvin <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega / (BOLTZMANN * kelvin);
    1.0 / x.exp_m1()
}
