//! Run configuration: TOML with interface units (GHz, MHz, ns, fF, nA, pH,
//! mK, flux in Φ₀), converted to SI with angular frequencies on resolve.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::constants::{angular, PLANCK};
use crate::device::Device;
use crate::dynamics::DephasingTable;
use crate::error::{Error, Result};
use crate::fit::Method;
use crate::shaping::{Branch, EdgeShape, DEFAULT_CLAMP_THRESHOLD};

const NS: f64 = 1e-9;

fn mhz(x: f64) -> f64 {
    angular(x * 1e6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub device: DeviceOverrides,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub experiment: Experiments,
}

fn default_profile() -> String {
    "paper2017".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceOverrides {
    #[serde(default)]
    pub line: LineOverrides,
    #[serde(default)]
    pub squid: SquidOverrides,
    #[serde(default)]
    pub coupling: CouplingOverrides,
    #[serde(default)]
    pub transmon: TransmonOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineOverrides {
    pub z0_ohm: Option<f64>,
    pub v_m_per_s: Option<f64>,
    pub x_qubit_mm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidOverrides {
    pub ic1_na: Option<f64>,
    pub ic2_na: Option<f64>,
    pub c_sq_ff: Option<f64>,
    pub mutual_ph: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingOverrides {
    pub c_s_ff: Option<f64>,
    pub c_sigma_ff: Option<f64>,
    /// E_J/h.
    pub ej_ghz: Option<f64>,
    pub ej_over_ec: Option<f64>,
    pub phi_off_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonOverrides {
    pub f01_ghz: Option<f64>,
    pub alpha_mhz: Option<f64>,
    pub t1_intrinsic_ns: Option<f64>,
    pub t2_intrinsic_ns: Option<f64>,
    pub t_eff_mk: Option<f64>,
    /// Γ_exc/2π.
    pub excitation_line_mhz: Option<f64>,
    /// (folded flux, Γ_φ/2π in MHz) pairs of the excess dephasing table.
    pub flux_dephasing_mhz: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Number of transmon levels kept.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Largest share of a target's energy allowed above the maximum rate.
    #[serde(default = "default_clamp")]
    pub clamp_threshold: f64,
}

fn default_truncation() -> usize {
    3
}

fn default_clamp() -> f64 {
    DEFAULT_CLAMP_THRESHOLD
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            truncation: default_truncation(),
            clamp_threshold: default_clamp(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Experiments {
    pub spectro_sweep: Option<SpectroSweep>,
    pub fit_curve: Option<FitCurve>,
    pub rabi: Option<Rabi>,
    pub decay: Option<Decay>,
    pub triggered: Option<Triggered>,
    pub shaped: Option<Shaped>,
    pub invert_shape: Option<InvertShape>,
    pub fidelity_table: Option<FidelityTable>,
}

/// Uniform grid `start..=stop` with `points` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self, path: &str) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.stop > self.start) {
            return Err(config_error(path, "need points ≥ 2 and stop > start"));
        }
        let h = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|k| self.start + k as f64 * h).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroSweep {
    #[serde(default = "sweep_flux")]
    pub flux: Grid,
    /// Probe span ±span/2 around ω₀₁.
    #[serde(default = "sweep_span")]
    pub span_mhz: f64,
    #[serde(default = "sweep_points")]
    pub detuning_points: usize,
    /// Standard deviation of each quadrature of the added noise.
    #[serde(default = "sweep_noise")]
    pub noise: f64,
}

fn sweep_flux() -> Grid {
    Grid {
        start: -0.5,
        stop: 0.5,
        points: 41,
    }
}
fn sweep_span() -> f64 {
    20.0
}
fn sweep_points() -> usize {
    201
}
fn sweep_noise() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    #[default]
    Nm,
    Lm,
}

impl From<FitMethod> for Method {
    fn from(m: FitMethod) -> Method {
        match m {
            FitMethod::Nm => Method::NelderMead,
            FitMethod::Lm => Method::LevenbergMarquardt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCurve {
    /// CSV with columns flux, gamma1_mhz. Synthetic data from the device when absent.
    pub input: Option<PathBuf>,
    #[serde(default = "curve_points")]
    pub points: usize,
    /// Relative standard deviation of multiplicative noise on synthetic data.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub method: FitMethod,
}

fn curve_points() -> usize {
    401
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rabi {
    #[serde(default)]
    pub flux: f64,
    /// Ω/2π.
    #[serde(default = "rabi_drive")]
    pub drive_mhz: f64,
    #[serde(default = "rabi_durations")]
    pub durations_ns: Grid,
}

fn rabi_drive() -> f64 {
    10.0
}
fn rabi_durations() -> Grid {
    Grid {
        start: 0.0,
        stop: 400.0,
        points: 201,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayProtocol {
    #[default]
    FreeInduction,
    IntrinsicT1,
    IntrinsicT2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    #[serde(default)]
    pub protocol: DecayProtocol,
    /// Bias of the free-induction measurement.
    #[serde(default)]
    pub flux: f64,
    /// Release bias of the intrinsic measurements.
    #[serde(default)]
    pub coupled_flux: f64,
    #[serde(default = "decay_delays")]
    pub delays_ns: Grid,
    /// T₁ used for T_φ in the T₂ protocol; measured first when absent.
    pub t1_ns: Option<f64>,
    /// Minimum T₂ at full coupling and the dephasing there, for the
    /// storage/jitter figure.
    #[serde(default = "jitter_t2")]
    pub jitter_t2_ns: f64,
    #[serde(default = "jitter_gphi")]
    pub jitter_gamma_phi_mhz: f64,
}

fn decay_delays() -> Grid {
    Grid {
        start: 0.0,
        stop: 6000.0,
        points: 61,
    }
}
fn jitter_t2() -> f64 {
    81.0
}
fn jitter_gphi() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triggered {
    #[serde(default = "triggered_storage")]
    pub storage_ns: f64,
    #[serde(default)]
    pub coupled_flux: f64,
    /// Apply a π pulse before storage.
    #[serde(default = "yes")]
    pub excite: bool,
}

fn triggered_storage() -> f64 {
    100.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shaped {
    #[serde(default = "shaped_shape")]
    pub shape: EdgeShape,
    /// Edge time constant; the shape's default when absent.
    pub edge_ns: Option<f64>,
    #[serde(default)]
    pub coupled_flux: f64,
    #[serde(default = "shaped_tail")]
    pub tail_ns: f64,
}

fn shaped_shape() -> EdgeShape {
    EdgeShape::Square
}
fn shaped_tail() -> f64 {
    400.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetShape {
    #[default]
    Sech,
    Exponential,
    RisingExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertShape {
    /// CSV with columns t_ns, amplitude (√(1/ns)). Built-in shape when absent.
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub shape: TargetShape,
    #[serde(default = "inv_width")]
    pub width_ns: f64,
    #[serde(default = "inv_center")]
    pub center_ns: f64,
    /// Norm of the sech target.
    #[serde(default = "inv_eta")]
    pub eta: f64,
    /// Γ/2π of the exponential targets.
    #[serde(default = "inv_rate")]
    pub rate_mhz: f64,
    #[serde(default = "inv_dt")]
    pub dt_ns: f64,
    #[serde(default = "inv_points")]
    pub points: usize,
    /// Rate cap Γ/2π; the branch maximum when absent.
    pub gamma_max_mhz: Option<f64>,
    #[serde(default)]
    pub branch: Branch,
    #[serde(default = "yes")]
    pub verify: bool,
    /// Verify with the intrinsic channels and temperature switched off.
    #[serde(default = "yes")]
    pub ideal: bool,
}

fn inv_width() -> f64 {
    40.0
}
fn inv_center() -> f64 {
    250.0
}
fn inv_eta() -> f64 {
    0.95
}
fn inv_rate() -> f64 {
    1.0
}
fn inv_dt() -> f64 {
    1.0
}
fn inv_points() -> usize {
    501
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityTable {
    #[serde(default = "fid_storages")]
    pub storages_ns: Vec<f64>,
    #[serde(default)]
    pub coupled_flux: f64,
    /// Loss budget at the longest storage time.
    #[serde(default = "yes")]
    pub budget: bool,
}

fn fid_storages() -> Vec<f64> {
    vec![100.0, 1000.0]
}

pub(crate) fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a configuration. Unknown keys and type errors are
/// reported with the dotted path of the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_error("", e.message().to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(&path, e.inner().message().to_string())
    })?;
    cfg.device()?;
    Ok(cfg)
}

fn set(path: &str, slot: &mut f64, value: Option<f64>, scale: f64) -> Result<()> {
    if let Some(v) = value {
        if !v.is_finite() {
            return Err(config_error(path, "must be finite"));
        }
        *slot = v * scale;
    }
    Ok(())
}

impl RunConfig {
    /// Named profile with the overrides applied, validated.
    pub fn device(&self) -> Result<Device> {
        let mut d = Device::preset(&self.profile)?;
        let o = &self.device;
        let b = &mut d.boundary;

        let l = &o.line;
        set("device.line.z0_ohm", &mut b.line.z0, l.z0_ohm, 1.0)?;
        set("device.line.v_m_per_s", &mut b.line.v, l.v_m_per_s, 1.0)?;
        set("device.line.x_qubit_mm", &mut b.line.x_qubit, l.x_qubit_mm, 1e-3)?;
        b.line.l0 = b.line.z0 / b.line.v;

        let s = &o.squid;
        set("device.squid.ic1_na", &mut b.squid.ic1, s.ic1_na, 1e-9)?;
        set("device.squid.ic2_na", &mut b.squid.ic2, s.ic2_na, 1e-9)?;
        set("device.squid.c_sq_ff", &mut b.squid.c_sq, s.c_sq_ff, 1e-15)?;
        set("device.squid.mutual_ph", &mut b.squid.mutual, s.mutual_ph, 1e-12)?;

        let c = &o.coupling;
        let ratio = b.coupling.e_j / b.coupling.e_c;
        set("device.coupling.c_s_ff", &mut b.coupling.c_s, c.c_s_ff, 1e-15)?;
        set(
            "device.coupling.c_sigma_ff",
            &mut b.coupling.c_sigma,
            c.c_sigma_ff,
            1e-15,
        )?;
        set("device.coupling.ej_ghz", &mut b.coupling.e_j, c.ej_ghz, PLANCK * 1e9)?;
        set(
            "device.coupling.phi_off_rad",
            &mut b.coupling.phi_off,
            c.phi_off_rad,
            1.0,
        )?;
        let ratio = c.ej_over_ec.unwrap_or(ratio);
        if !(ratio > 0.0) {
            return Err(config_error("device.coupling.ej_over_ec", "must be positive"));
        }
        b.coupling.e_c = b.coupling.e_j / ratio;

        let t = &o.transmon;
        let p = &mut d.transmon;
        set("device.transmon.f01_ghz", &mut p.omega01, t.f01_ghz, angular(1e9))?;
        b.omega01 = p.omega01;
        set("device.transmon.alpha_mhz", &mut p.alpha, t.alpha_mhz, mhz(1.0))?;
        set("device.transmon.t_eff_mk", &mut p.t_eff, t.t_eff_mk, 1e-3)?;
        set(
            "device.transmon.excitation_line_mhz",
            &mut p.gamma_excitation_line,
            t.excitation_line_mhz,
            mhz(1.0),
        )?;
        let mut t1 = 1.0 / p.gamma1_intrinsic;
        let mut t2 = 1.0 / (p.gammaphi_intrinsic + 0.5 * p.gamma1_intrinsic);
        set("device.transmon.t1_intrinsic_ns", &mut t1, t.t1_intrinsic_ns, NS)?;
        set("device.transmon.t2_intrinsic_ns", &mut t2, t.t2_intrinsic_ns, NS)?;
        if t.t1_intrinsic_ns.is_some() || t.t2_intrinsic_ns.is_some() {
            if !(t1 > 0.0 && t2 > 0.0 && t2 <= 2.0 * t1) {
                return Err(config_error("device.transmon.t2_intrinsic_ns", "need 0 < T₂ ≤ 2T₁"));
            }
            p.gamma1_intrinsic = 1.0 / t1;
            p.gammaphi_intrinsic = 1.0 / t2 - 0.5 / t1;
        }
        if let Some(table) = &t.flux_dephasing_mhz {
            let points = table.iter().map(|&(f, g)| (f, mhz(g))).collect();
            p.gammaphi_flux = DephasingTable::new(points)
                .map_err(|e| config_error("device.transmon.flux_dephasing_mhz", e.to_string()))?;
        }
        p.levels = self.numerics.truncation;

        if !(self.numerics.clamp_threshold >= 0.0 && self.numerics.clamp_threshold <= 1.0) {
            return Err(config_error("numerics.clamp_threshold", "must lie in [0, 1]"));
        }
        d.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_error(&format!("device.{name}"), reason),
            other => other,
        })?;
        Ok(d)
    }

    /// Experiment block for `section`, or a config error naming it.
    pub fn require<'a, T>(&self, section: &str, block: &'a Option<T>) -> Result<&'a T> {
        block
            .as_ref()
            .ok_or_else(|| config_error(&format!("experiment.{section}"), "missing section"))
    }

    /// Canonical TOML of the resolved configuration; hashed into the manifest.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
