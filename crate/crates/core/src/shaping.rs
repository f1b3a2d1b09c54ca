//! Inverse design of emitted wavepackets: target ξ(t) → Γ₁(t) → Φ(t) → I(t),
//! and forward verification of a flux trajectory.

use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::device::Device;
use crate::dynamics::{run_schedule_from, DrivePulse, EmissionRecord, RecordOptions};
use crate::error::{Error, Result};
use crate::schedule::{FluxSegment, FluxShape, PulseSchedule, DEFAULT_RAMP};
use crate::sequencer::{LEAD, PULSE_LENGTH};

/// Share of the target energy that may fall in clamped samples before a
/// design is rejected.
pub const DEFAULT_CLAMP_THRESHOLD: f64 = 0.05;
const NORM_TOL: f64 = 1e-9;
const GRID_TOL: f64 = 1e-9;

fn check_uniform(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::param("t", "need at least two samples"));
    }
    let h = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(h > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > GRID_TOL * h) {
        return Err(Error::param("t", "grid must be uniform and increasing"));
    }
    Ok(h)
}

fn trapezoid(h: f64, y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    h * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[y.len() - 1]))
}

/// Running integral with log-linear interpolation between positive samples
/// (exact for exponential segments), trapezoid otherwise.
fn cumulative(h: f64, y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(y.len());
    out.push(0.0);
    for w in y.windows(2) {
        let r = (w[1] / w[0]).ln();
        acc += if w[0] > 0.0 && w[1] > 0.0 && r.abs() > 1e-6 {
            h * (w[1] - w[0]) / r
        } else {
            0.5 * h * (w[0] + w[1])
        };
        out.push(acc);
    }
    out
}

/// Photon wavepacket: real amplitude ξ(t) (√photons/s) on a uniform grid,
/// with a constant carrier phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavepacket {
    pub t: Vec<f64>,
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

impl Wavepacket {
    pub fn new(t: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        let w = Wavepacket {
            t,
            amplitude,
            phase: 0.0,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let t: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
        let amplitude = t.iter().map(|&s| f(s)).collect();
        Self::new(t, amplitude)
    }

    /// Spontaneous-emission packet √Γ e^{−Γt/2}.
    pub fn exponential(gamma: f64, dt: f64, n: usize) -> Result<Self> {
        Self::from_fn(0.0, dt, n, |t| gamma.sqrt() * (-0.5 * gamma * t).exp())
    }

    /// Time-reversed exponential √Γ e^{Γ(t−t_end)/2}, truncated at the last sample.
    pub fn rising_exponential(gamma: f64, dt: f64, n: usize) -> Result<Self> {
        let t_end = (n - 1) as f64 * dt;
        Self::from_fn(0.0, dt, n, |t| gamma.sqrt() * (0.5 * gamma * (t - t_end)).exp())
    }

    /// √(η/2w) sech((t − t_c)/w), normalised to η on the infinite line.
    pub fn sech(width: f64, center: f64, eta: f64, dt: f64, n: usize) -> Result<Self> {
        Self::from_fn(0.0, dt, n, |t| {
            (eta / (2.0 * width)).sqrt() / ((t - center) / width).cosh()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() != self.amplitude.len() {
            return Err(Error::Dimension {
                expected: self.t.len(),
                found: self.amplitude.len(),
            });
        }
        check_uniform(&self.t)?;
        if self.amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::param("amplitude", "must be finite and non-negative"));
        }
        let norm = self.norm();
        if norm > 1.0 + NORM_TOL {
            return Err(Error::param("amplitude", format!("norm {norm} exceeds one photon")));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    /// ∫|ξ|² dt.
    pub fn norm(&self) -> f64 {
        let sq: Vec<f64> = self.amplitude.iter().map(|a| a * a).collect();
        trapezoid(self.dt(), &sq)
    }

    /// ‖ξ − η‖ / ‖η‖ on the common grid; the absolute distance when η vanishes.
    pub fn l2_distance(&self, reference: &Wavepacket) -> Result<f64> {
        if self.amplitude.len() != reference.amplitude.len() {
            return Err(Error::Dimension {
                expected: reference.amplitude.len(),
                found: self.amplitude.len(),
            });
        }
        let h = reference.dt();
        let diff: Vec<f64> = self
            .amplitude
            .iter()
            .zip(&reference.amplitude)
            .map(|(a, b)| (a - b).powi(2))
            .collect();
        let num = trapezoid(h, &diff).sqrt();
        let den = reference.norm().sqrt();
        Ok(if den > 0.0 { num / den } else { num })
    }
}

/// Emission-rate program Γ₁(t) on the target grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub t: Vec<f64>,
    pub gamma1: Vec<f64>,
    /// Share of the target energy in samples where Γ₁ was clamped.
    pub clamped_fraction: f64,
}

/// Γ₁(t) = |ξ|² / (1 − ∫₀ᵗ|ξ|²), clamped at `gamma_max`. Fails when more
/// than `threshold` of the target energy needs clamping.
pub fn rate_from_target(target: &Wavepacket, gamma_max: f64, threshold: f64) -> Result<RateProfile> {
    target.validate()?;
    if !(gamma_max > 0.0) {
        return Err(Error::param("gamma_max", "must be positive"));
    }
    let h = target.dt();
    let sq: Vec<f64> = target.amplitude.iter().map(|a| a * a).collect();
    let emitted = cumulative(h, &sq);
    let total = emitted[emitted.len() - 1];
    let mut clamped = vec![0.0; sq.len()];
    let gamma1: Vec<f64> = sq
        .iter()
        .zip(&emitted)
        .zip(clamped.iter_mut())
        .map(|((&p, &e), c)| {
            let remaining = 1.0 - e;
            let g = if p == 0.0 {
                0.0
            } else if remaining > 0.0 {
                p / remaining
            } else {
                f64::INFINITY
            };
            if g > gamma_max {
                *c = p;
                gamma_max
            } else {
                g
            }
        })
        .collect();
    let clamped_fraction = if total > 0.0 {
        trapezoid(h, &clamped) / total
    } else {
        0.0
    };
    if clamped_fraction > threshold {
        return Err(Error::InfeasibleTarget {
            fraction: clamped_fraction,
            threshold,
        });
    }
    Ok(RateProfile {
        t: target.t.clone(),
        gamma1,
        clamped_fraction,
    })
}

/// Side of the decoupling point used for the flux inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Between the coupling maximum near 0 and +Φ_dec.
    #[default]
    Positive,
    /// Mirror image between −Φ_dec and the maximum.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxTrajectory {
    pub t: Vec<f64>,
    /// Φ/Φ₀.
    pub flux: Vec<f64>,
    /// Bias-line current (A).
    pub current: Vec<f64>,
}

impl FluxTrajectory {
    pub fn from_flux(device: &Device, t: Vec<f64>, flux: Vec<f64>) -> Self {
        let current = flux.iter().map(|&f| device.boundary.current_for_flux(f)).collect();
        FluxTrajectory { t, flux, current }
    }

    /// Samples a schedule's flux channel every `dt` over its duration.
    pub fn from_schedule(device: &Device, schedule: &PulseSchedule, dt: f64) -> Self {
        let n = (schedule.duration / dt).round() as usize + 1;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let flux = t.iter().map(|&s| schedule.flux_at(s)).collect();
        Self::from_flux(device, t, flux)
    }

    /// Piecewise-linear flux schedule starting at t = 0; the flux holds its
    /// final value afterwards.
    pub fn to_schedule(&self) -> Result<PulseSchedule> {
        check_uniform(&self.t)?;
        let last = self.flux[self.flux.len() - 1];
        let duration = self.t[self.t.len() - 1] - self.t[0];
        Ok(PulseSchedule::idle(last, duration).with_flux(FluxSegment {
            shape: FluxShape::Custom {
                samples: self.flux.clone(),
            },
            level: last,
            start: 0.0,
            duration,
            edge: 0.0,
        }))
    }
}

/// Flux interval of the monotone branch, ordered from decoupled to coupled.
fn branch_bounds(device: &Device, branch: Branch) -> Result<(f64, f64)> {
    let dec = device.decoupling_flux()?;
    let (peak, _) = device.gamma1_peak();
    let peak = peak.rem_euclid(1.0);
    let peak = if peak > 0.5 { peak - 1.0 } else { peak };
    Ok(match branch {
        Branch::Positive => (dec, peak),
        Branch::Negative => (-dec, -peak),
    })
}

/// Bisection inverse of Γ₁(Φ) on one monotone branch.
pub struct RateInverter<'a> {
    device: &'a Device,
    decoupled: f64,
    coupled: f64,
    max: f64,
}

impl<'a> RateInverter<'a> {
    pub fn new(device: &'a Device, branch: Branch) -> Result<Self> {
        let (decoupled, coupled) = branch_bounds(device, branch)?;
        let n = 2000;
        let mut prev = device.gamma1(decoupled);
        for k in 1..=n {
            let f = decoupled + (coupled - decoupled) * k as f64 / n as f64;
            let g = device.gamma1(f);
            if g < prev * (1.0 - 1e-12) {
                return Err(Error::NonMonotonicBranch {
                    lo: decoupled.min(coupled),
                    hi: decoupled.max(coupled),
                });
            }
            prev = g;
        }
        Ok(RateInverter {
            device,
            decoupled,
            coupled,
            max: device.gamma1(coupled),
        })
    }

    pub fn max_rate(&self) -> f64 {
        self.max
    }

    pub fn flux(&self, rate: f64) -> Result<f64> {
        if !(rate >= 0.0) || rate > self.max * (1.0 + 1e-12) {
            return Err(Error::RateOutOfRange { rate, max: self.max });
        }
        if rate == 0.0 {
            return Ok(self.decoupled);
        }
        if rate >= self.max {
            return Ok(self.coupled);
        }
        // `lo` stays on the decoupled side (Γ₁ < rate).
        let (mut lo, mut hi) = (self.decoupled, self.coupled);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.device.gamma1(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-16 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Pointwise flux inversion of a rate program.
pub fn flux_from_rate(device: &Device, rates: &RateProfile, branch: Branch) -> Result<FluxTrajectory> {
    let inv = RateInverter::new(device, branch)?;
    let flux = rates.gamma1.iter().map(|&g| inv.flux(g)).collect::<Result<Vec<_>>>()?;
    Ok(FluxTrajectory::from_flux(device, rates.t.clone(), flux))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCheck {
    pub achieved: Wavepacket,
    /// ‖ξ_achieved − ξ_target‖ / ‖ξ_target‖.
    pub l2_error: f64,
    pub record: EmissionRecord,
}

/// Runs the trajectory from |1⟩ and compares √P(t) with the target.
pub fn verify_shape(device: &Device, trajectory: &FluxTrajectory, target: &Wavepacket) -> Result<ShapeCheck> {
    target.validate()?;
    if trajectory.t.len() != target.t.len() {
        return Err(Error::Dimension {
            expected: target.t.len(),
            found: trajectory.t.len(),
        });
    }
    let schedule = trajectory.to_schedule()?;
    let opts = RecordOptions {
        sample_interval: target.dt(),
        ..RecordOptions::default()
    };
    let initial = DensityMatrix::basis(device.transmon.levels, 1);
    let (record, _) = run_schedule_from(device, &schedule, &initial, &opts)?;
    let amplitude: Vec<f64> = record.power.iter().map(|p| p.max(0.0).sqrt()).collect();
    let achieved = Wavepacket {
        t: target.t.clone(),
        amplitude,
        phase: target.phase,
    };
    let l2_error = achieved.l2_distance(target)?;
    Ok(ShapeCheck {
        achieved,
        l2_error,
        record,
    })
}

/// Falling-edge families of the flux pulse that holds the qubit at the
/// decoupling point before release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeShape {
    Square,
    ExpEdge,
    CubicExpEdge,
}

impl EdgeShape {
    /// Default edge time constants, picked by hand to give the qualitative
    /// emission shapes (exponential, nearly symmetric, time-reversed).
    pub fn default_edge(self) -> f64 {
        match self {
            EdgeShape::Square => DEFAULT_RAMP,
            EdgeShape::ExpEdge => 100e-9,
            EdgeShape::CubicExpEdge => 900e-9,
        }
    }

    fn flux_shape(self) -> FluxShape {
        match self {
            EdgeShape::Square => FluxShape::Square,
            EdgeShape::ExpEdge => FluxShape::ExpEdge,
            EdgeShape::CubicExpEdge => FluxShape::CubicExpEdge,
        }
    }
}

/// Decouple, apply `pulse` after the lead time, and release to
/// `coupled_flux` through the chosen edge. Returns the schedule and its
/// flux trajectory sampled every nanosecond.
pub fn emulate_paper_edges(
    device: &Device,
    shape: EdgeShape,
    edge: f64,
    pulse: &DrivePulse,
    coupled_flux: f64,
    tail: f64,
) -> Result<(PulseSchedule, FluxTrajectory)> {
    if !(edge > 0.0) || !(tail >= 0.0) {
        return Err(Error::param("edge", "edge time must be positive and tail non-negative"));
    }
    let dec = device.decoupling_flux()?;
    let start = DEFAULT_RAMP + LEAD;
    let release = start + pulse.duration.max(PULSE_LENGTH);
    let segment = FluxSegment::square(dec, 0.0, release).with_shape(shape.flux_shape(), edge);
    let end = segment.end() + tail;
    let schedule = PulseSchedule::idle(coupled_flux, end)
        .with_flux(segment)
        .with_drive(DrivePulse { start, ..pulse.clone() })
        .with_marker(start, "excitation")
        .with_marker(release, "release");
    schedule.validate()?;
    let traj = FluxTrajectory::from_schedule(device, &schedule, 1e-9);
    Ok((schedule, traj))
}

/// Asymmetry (fall − rise)/(fall + rise) of an envelope after `from`,
/// with rise and fall measured between the half-maximum crossings and the
/// peak: +1 for an instantaneous rise, 0 for a symmetric packet, negative
/// when the packet rises more slowly than it decays.
pub fn envelope_asymmetry(t: &[f64], y: &[f64], from: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= from)
        .map(|(t, y)| (*t, y.abs()))
        .collect();
    let (k, peak) = pts
        .iter()
        .enumerate()
        .map(|(k, p)| (k, p.1))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let crossing = |a: (f64, f64), b: (f64, f64)| a.0 + (half - a.1) / (b.1 - a.1) * (b.0 - a.0);
    let rise_start = (1..=k)
        .rev()
        .find(|&j| pts[j - 1].1 < half)
        .map(|j| crossing(pts[j - 1], pts[j]))
        .unwrap_or(pts[0].0);
    let fall_end = (k..pts.len() - 1)
        .find(|&j| pts[j + 1].1 < half)
        .map(|j| crossing(pts[j], pts[j + 1]))?;
    let (rise, fall) = (pts[k].0 - rise_start, fall_end - pts[k].0);
    Some((fall - rise) / (fall + rise))
}
