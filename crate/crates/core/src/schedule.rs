//! Experiment programs: drive pulses and flux pulses on a common time axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::DrivePulse;
use crate::error::{Error, Result};

/// Rise time of every flux segment and default fall time of square ones (s).
pub const DEFAULT_RAMP: f64 = 1e-9;

/// Initial departure scales ε of the inverted edges.
pub const EXP_EDGE_ONSET: f64 = 0.01;
pub const CUBIC_EDGE_ONSET: f64 = 0.2;

/// Edge length in units of τ, where the departure reaches the base.
fn edge_length(onset: f64, power: f64) -> f64 {
    (1.0 + 1.0 / onset).ln().powf(1.0 / power)
}

fn inverted_edge(s: f64, onset: f64) -> f64 {
    (1.0 - onset * s.exp_m1()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FluxShape {
    /// Linear fall over `edge` seconds.
    Square,
    /// Inverted exponential: the departure from the plateau grows as
    /// ε(exp(s/τ) − 1) until it reaches the base, τ = `edge`.
    ExpEdge,
    /// Inverted cubic exponential, departure ε(exp((s/τ)³) − 1).
    CubicExpEdge,
    /// Absolute flux samples spread uniformly over the segment window.
    Custom { samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSegment {
    #[serde(flatten)]
    pub shape: FluxShape,
    /// Plateau flux (Φ₀).
    pub level: f64,
    pub start: f64,
    /// Time from the start of the rise to the start of the fall (s).
    pub duration: f64,
    /// Fall time or edge time constant (s).
    pub edge: f64,
}

impl FluxSegment {
    pub fn square(level: f64, start: f64, duration: f64) -> Self {
        FluxSegment {
            shape: FluxShape::Square,
            level,
            start,
            duration,
            edge: DEFAULT_RAMP,
        }
    }

    pub fn with_shape(mut self, shape: FluxShape, edge: f64) -> Self {
        self.shape = shape;
        self.edge = edge;
        self
    }

    /// End of the plateau, where the falling edge begins.
    pub fn fall_start(&self) -> f64 {
        self.start + self.duration
    }

    /// Time after which the segment no longer differs from the base flux.
    pub fn end(&self) -> f64 {
        let tail = match self.shape {
            FluxShape::Square => self.edge,
            FluxShape::ExpEdge => edge_length(EXP_EDGE_ONSET, 1.0) * self.edge,
            FluxShape::CubicExpEdge => edge_length(CUBIC_EDGE_ONSET, 3.0) * self.edge,
            FluxShape::Custom { .. } => 0.0,
        };
        self.fall_start() + tail
    }

    fn validate(&self) -> Result<()> {
        if !self.level.is_finite() || !self.start.is_finite() {
            return Err(Error::Schedule("flux level and start must be finite".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Schedule("flux segment duration must be positive".into()));
        }
        match &self.shape {
            FluxShape::Custom { samples } => {
                if samples.len() < 2 || samples.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Schedule("custom flux needs at least two finite samples".into()));
                }
            }
            _ => {
                if !(self.edge > 0.0) {
                    return Err(Error::Schedule("flux edge time must be positive".into()));
                }
                if self.duration < DEFAULT_RAMP {
                    return Err(Error::Schedule("flux segment shorter than its rise".into()));
                }
            }
        }
        Ok(())
    }

    /// Flux at `t`, or `None` outside the segment.
    pub fn flux_at(&self, t: f64, base: f64) -> Option<f64> {
        if t < self.start || t >= self.end().max(self.fall_start()) {
            return None;
        }
        if let FluxShape::Custom { samples } = &self.shape {
            let n = samples.len() - 1;
            let pos = (t - self.start) / self.duration * n as f64;
            let k = (pos.floor() as usize).min(n - 1);
            let frac = pos - k as f64;
            return Some(samples[k] * (1.0 - frac) + samples[k + 1] * frac);
        }
        let rise = ((t - self.start) / DEFAULT_RAMP).min(1.0);
        let s = t - self.fall_start();
        let u = if s < 0.0 {
            rise
        } else {
            match self.shape {
                FluxShape::Square => 1.0 - s / self.edge,
                FluxShape::ExpEdge => inverted_edge(s / self.edge, EXP_EDGE_ONSET),
                FluxShape::CubicExpEdge => inverted_edge((s / self.edge).powi(3), CUBIC_EDGE_ONSET),
                FluxShape::Custom { .. } => unreachable!(),
            }
        };
        Some(base + (self.level - base) * u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub time: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    /// Flux outside every flux segment (Φ₀).
    pub base_flux: f64,
    #[serde(default)]
    pub drive_segments: Vec<DrivePulse>,
    #[serde(default)]
    pub flux_segments: Vec<FluxSegment>,
    /// Total simulated time (s).
    pub duration: f64,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

impl PulseSchedule {
    pub fn idle(base_flux: f64, duration: f64) -> Self {
        PulseSchedule {
            base_flux,
            drive_segments: Vec::new(),
            flux_segments: Vec::new(),
            duration,
            markers: Vec::new(),
        }
    }

    pub fn with_drive(mut self, pulse: DrivePulse) -> Self {
        self.drive_segments.push(pulse);
        self
    }

    pub fn with_flux(mut self, segment: FluxSegment) -> Self {
        self.flux_segments.push(segment);
        self
    }

    pub fn with_marker(mut self, time: f64, label: &str) -> Self {
        self.markers.push(Marker {
            time,
            label: label.to_string(),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_flux.is_finite() {
            return Err(Error::Schedule("base flux must be finite".into()));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::Schedule("duration must be finite and non-negative".into()));
        }
        for p in &self.drive_segments {
            p.validate()?;
        }
        for s in &self.flux_segments {
            s.validate()?;
        }
        for w in self.drive_segments.windows(2) {
            if w[1].start < w[0].start {
                return Err(Error::Schedule("drive segments not sorted by start".into()));
            }
            if w[1].start < w[0].end() - 1e-15 {
                return Err(Error::Schedule(format!(
                    "drive segments overlap at t = {:e} s",
                    w[1].start
                )));
            }
        }
        for w in self.flux_segments.windows(2) {
            if w[1].start < w[0].start {
                return Err(Error::Schedule("flux segments not sorted by start".into()));
            }
            if w[1].start < w[0].end() - 1e-15 {
                return Err(Error::Schedule(format!(
                    "flux segments overlap at t = {:e} s",
                    w[1].start
                )));
            }
        }
        Ok(())
    }

    pub fn flux_at(&self, t: f64) -> f64 {
        // Segments are few; a linear scan beats bookkeeping.
        self.flux_segments
            .iter()
            .find_map(|s| s.flux_at(t, self.base_flux))
            .unwrap_or(self.base_flux)
    }

    pub fn drive_at(&self, t: f64) -> Complex64 {
        self.drive_segments.iter().map(|p| p.complex_amplitude(t)).sum()
    }

    pub fn peak_drive(&self) -> f64 {
        self.drive_segments
            .iter()
            .map(|p| p.peak_amplitude())
            .fold(0.0, f64::max)
    }

    pub fn max_detuning(&self) -> f64 {
        self.drive_segments
            .iter()
            .map(|p| p.carrier_detuning.abs())
            .fold(0.0, f64::max)
    }

    /// Flux values the schedule can visit, for bounding rates.
    pub fn flux_levels(&self) -> Vec<f64> {
        let mut v = vec![self.base_flux];
        for s in &self.flux_segments {
            match &s.shape {
                FluxShape::Custom { samples } => v.extend(samples),
                _ => v.push(s.level),
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_segment_ramps_linearly() {
        let s = FluxSegment::square(0.39, 10e-9, 100e-9);
        assert_eq!(s.flux_at(5e-9, 0.0), None);
        assert!((s.flux_at(10.5e-9, 0.0).unwrap() - 0.195).abs() < 1e-12);
        assert_eq!(s.flux_at(50e-9, 0.0), Some(0.39));
        assert!((s.flux_at(110.25e-9, 0.0).unwrap() - 0.2925).abs() < 1e-9);
        assert_eq!(s.flux_at(112e-9, 0.0), None);
    }

    #[test]
    fn inverted_edges_reach_base() {
        let e = FluxSegment::square(0.4, 0.0, 10e-9).with_shape(FluxShape::ExpEdge, 5e-9);
        let f = e.flux_at(15e-9, 0.1).unwrap();
        let u = 1.0 - EXP_EDGE_ONSET * (1.0f64.exp() - 1.0);
        assert!((f - (0.1 + 0.3 * u)).abs() < 1e-12);
        let c = FluxSegment::square(0.4, 0.0, 10e-9).with_shape(FluxShape::CubicExpEdge, 5e-9);
        let u = 1.0 - CUBIC_EDGE_ONSET * (1.0f64.exp() - 1.0);
        assert!((c.flux_at(15e-9, 0.0).unwrap() - 0.4 * u).abs() < 1e-12);
        for seg in [e, c] {
            assert!((seg.flux_at(seg.end() - 1e-15, 0.1).unwrap() - 0.1).abs() < 1e-6);
            assert_eq!(seg.flux_at(seg.end(), 0.1), None);
        }
    }

    #[test]
    fn overlapping_segments_are_rejected() {
        let s = PulseSchedule::idle(0.0, 1e-6)
            .with_flux(FluxSegment::square(0.39, 0.0, 100e-9))
            .with_flux(FluxSegment::square(0.39, 100.5e-9, 100e-9));
        assert!(s.validate().is_err());
        let d = PulseSchedule::idle(0.0, 1e-6)
            .with_drive(DrivePulse::square(1.0, 0.0, 20e-9))
            .with_drive(DrivePulse::square(1.0, 10e-9, 20e-9));
        assert!(d.validate().is_err());
    }
}
