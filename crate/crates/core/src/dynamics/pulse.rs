use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drive envelope shape. Amplitudes are Rabi angular frequencies (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope {
    /// Gaussian centred in the pulse window, truncated at its edges.
    Gaussian {
        amplitude: f64,
        sigma: f64,
    },
    Square {
        amplitude: f64,
    },
    /// Uniformly spaced samples spanning the pulse window, linearly interpolated.
    Custom {
        samples: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivePulse {
    pub envelope: Envelope,
    /// Start time (s).
    pub start: f64,
    /// Duration (s).
    pub duration: f64,
    /// ω₀₁ − ω_drive (rad/s).
    pub carrier_detuning: f64,
    /// Carrier phase (rad).
    pub phase: f64,
}

impl DrivePulse {
    pub fn gaussian(amplitude: f64, sigma: f64, start: f64, duration: f64) -> Self {
        DrivePulse {
            envelope: Envelope::Gaussian { amplitude, sigma },
            start,
            duration,
            carrier_detuning: 0.0,
            phase: 0.0,
        }
    }

    pub fn square(amplitude: f64, start: f64, duration: f64) -> Self {
        DrivePulse {
            envelope: Envelope::Square { amplitude },
            start,
            duration,
            carrier_detuning: 0.0,
            phase: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::param("duration", "pulse duration must be positive"));
        }
        if !self.start.is_finite() {
            return Err(Error::param("start", "must be finite"));
        }
        match &self.envelope {
            Envelope::Gaussian { sigma, amplitude } => {
                if !(*sigma > 0.0) || !amplitude.is_finite() {
                    return Err(Error::param("sigma", "gaussian width must be positive"));
                }
            }
            Envelope::Square { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(Error::param("amplitude", "must be finite"));
                }
            }
            Envelope::Custom { samples } => {
                if samples.len() < 2 {
                    return Err(Error::param("samples", "need at least two samples"));
                }
            }
        }
        Ok(())
    }

    /// Real envelope Ω(t); zero outside [start, end).
    pub fn amplitude_at(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end() {
            return 0.0;
        }
        match &self.envelope {
            Envelope::Square { amplitude } => *amplitude,
            Envelope::Gaussian { amplitude, sigma } => {
                let x = (t - self.start - 0.5 * self.duration) / sigma;
                amplitude * (-0.5 * x * x).exp()
            }
            Envelope::Custom { samples } => {
                let n = samples.len() - 1;
                let pos = (t - self.start) / self.duration * n as f64;
                let k = (pos.floor() as usize).min(n - 1);
                let frac = pos - k as f64;
                samples[k] * (1.0 - frac) + samples[k + 1] * frac
            }
        }
    }

    /// Peak |Ω| over the pulse.
    pub fn peak_amplitude(&self) -> f64 {
        match &self.envelope {
            Envelope::Square { amplitude } | Envelope::Gaussian { amplitude, .. } => amplitude.abs(),
            Envelope::Custom { samples } => samples.iter().fold(0.0, |m, s| m.max(s.abs())),
        }
    }

    /// Complex drive Ω(t)·exp(−i(φ − δ t)) in the frame rotating at ω₀₁, so
    /// that H_d = ½(Ω̃ b† + Ω̃* b).
    pub fn complex_amplitude(&self, t: f64) -> Complex64 {
        let a = self.amplitude_at(t);
        if a == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(a, -(self.phase - self.carrier_detuning * t))
    }

    /// Same pulse with amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let envelope = match &self.envelope {
            Envelope::Gaussian { amplitude, sigma } => Envelope::Gaussian {
                amplitude: amplitude * factor,
                sigma: *sigma,
            },
            Envelope::Square { amplitude } => Envelope::Square {
                amplitude: amplitude * factor,
            },
            Envelope::Custom { samples } => Envelope::Custom {
                samples: samples.iter().map(|s| s * factor).collect(),
            },
        };
        DrivePulse {
            envelope,
            ..self.clone()
        }
    }
}
