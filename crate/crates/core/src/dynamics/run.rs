use num_complex::Complex64 as C64;

use super::generator::{ControlPoint, Controls, Generator};
use super::integrate::{Evolver, StepAccumulators};
use super::record::{moments_of_vec, EmissionRecord};
use crate::density::DensityMatrix;
use crate::device::Device;
use crate::error::{Error, Result};
use crate::schedule::PulseSchedule;

/// Controls generated by a schedule on a device: the drive from the drive
/// segments, Γ₁ and flux dephasing from the instantaneous flux.
pub struct ScheduleControls<'a> {
    pub device: &'a Device,
    pub schedule: &'a PulseSchedule,
    /// Include the flux-dependent dephasing table.
    pub flux_dephasing: bool,
}

impl<'a> ScheduleControls<'a> {
    pub fn new(device: &'a Device, schedule: &'a PulseSchedule, flux_dephasing: bool) -> Self {
        ScheduleControls {
            device,
            schedule,
            flux_dephasing,
        }
    }

    /// Upper bound of the control values, for the step-size rule.
    pub fn peak(&self) -> ControlPoint {
        let gphi = if self.flux_dephasing {
            self.device
                .transmon
                .gammaphi_flux
                .points()
                .iter()
                .map(|p| p.1)
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        let gamma1 = self
            .schedule
            .flux_levels()
            .iter()
            .map(|&f| self.device.gamma1(f))
            .fold(self.device.gamma1_peak().1, f64::max);
        ControlPoint {
            drive: C64::new(self.schedule.peak_drive(), 0.0),
            gamma1,
            gamma_phi_flux: gphi,
        }
    }

    pub fn dt_max(&self, gen: &Generator) -> f64 {
        gen.dt_max(self.schedule.peak_drive(), self.schedule.max_detuning(), &self.peak())
    }
}

impl Controls for ScheduleControls<'_> {
    fn at(&self, t: f64) -> ControlPoint {
        let flux = self.schedule.flux_at(t);
        ControlPoint {
            drive: self.schedule.drive_at(t),
            gamma1: self.device.gamma1(flux),
            gamma_phi_flux: if self.flux_dephasing {
                self.device.transmon.gammaphi_flux.rate(flux)
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOptions {
    /// Spacing of recorded samples (s).
    pub sample_interval: f64,
    /// Integration step; the stability bound when `None`.
    pub dt: Option<f64>,
    pub flux_dephasing: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions {
            sample_interval: 1e-9,
            dt: None,
            flux_dephasing: true,
        }
    }
}

/// Runs `schedule` from the device's thermal equilibrium state.
pub fn run_schedule(device: &Device, schedule: &PulseSchedule, options: &RecordOptions) -> Result<EmissionRecord> {
    let p = &device.transmon;
    let rho = DensityMatrix::thermal(p.levels, p.omega01, p.alpha, p.t_eff);
    run_schedule_from(device, schedule, &rho, options).map(|(r, _)| r)
}

/// Runs `schedule` from `initial`; returns the record and the final state.
pub fn run_schedule_from(
    device: &Device,
    schedule: &PulseSchedule,
    initial: &DensityMatrix,
    options: &RecordOptions,
) -> Result<(EmissionRecord, DensityMatrix)> {
    device.validate()?;
    schedule.validate()?;
    let d = device.transmon.levels;
    if initial.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            found: initial.dim(),
        });
    }
    if !(options.sample_interval > 0.0) {
        return Err(Error::param("sample_interval", "must be positive"));
    }
    let gen = Generator::new(&device.transmon);
    let controls = ScheduleControls::new(device, schedule, options.flux_dephasing);
    let dt_max = controls.dt_max(&gen);
    let dt = match options.dt {
        Some(dt) if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) => return Err(Error::StepSize { dt, dt_max }),
        Some(dt) => dt,
        None => dt_max,
    };

    let n_samples = (schedule.duration / options.sample_interval * (1.0 - 1e-12)).ceil() as usize;
    let mut times: Vec<f64> = (0..n_samples).map(|k| k as f64 * options.sample_interval).collect();
    times.push(schedule.duration);

    let mut rec = EmissionRecord {
        t: Vec::with_capacity(times.len()),
        i: Vec::with_capacity(times.len()),
        q: Vec::with_capacity(times.len()),
        power: Vec::with_capacity(times.len()),
        populations: Vec::with_capacity(times.len()),
        gamma1: Vec::with_capacity(times.len()),
        flux: Vec::with_capacity(times.len()),
        markers: schedule.markers.clone(),
        emitted_photons: 0.0,
        intrinsic_loss: 0.0,
        rotation: 0.0,
        steps: 0,
    };
    let push = |rec: &mut EmissionRecord, t: f64, x: &[C64]| {
        let flux = schedule.flux_at(t);
        let g = device.gamma1(flux);
        let m = moments_of_vec(x, d, g);
        rec.t.push(t);
        rec.i.push(m.i);
        rec.q.push(m.q);
        rec.power.push(m.power);
        rec.populations.push((0..d).map(|j| x[j + j * d].re).collect());
        rec.gamma1.push(g);
        rec.flux.push(flux);
    };

    let mut x = initial.to_vec();
    let mut acc = StepAccumulators::default();
    let mut ev = Evolver::new(&gen);
    push(&mut rec, times[0], &x);
    for w in times.windows(2) {
        rec.steps += ev.evolve(&controls, &mut x, w[0], w[1], dt, &mut acc, |_, _| {});
        push(&mut rec, w[1], &x);
    }
    rec.emitted_photons = acc.emitted;
    rec.intrinsic_loss = acc.intrinsic_loss;
    Ok((rec, DensityMatrix::from_vec(d, &x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::FluxSegment;

    fn cold_device() -> Device {
        let mut d = Device::paper2017();
        d.transmon.t_eff = 0.0;
        d
    }

    #[test]
    fn empty_schedule_from_ground_is_silent() {
        let d = cold_device();
        let rec = run_schedule(&d, &PulseSchedule::idle(0.0, 50e-9), &RecordOptions::default()).unwrap();
        assert_eq!(rec.len(), 51);
        assert!(rec.i.iter().chain(&rec.q).chain(&rec.power).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn decoupled_storage_suppresses_emission() {
        let d = cold_device();
        let dec = d.decoupling_flux().unwrap();
        let s = PulseSchedule::idle(0.0, 400e-9).with_flux(FluxSegment::square(dec, 0.0, 200e-9));
        let (rec, _) = run_schedule_from(&d, &s, &DensityMatrix::basis(3, 1), &RecordOptions::default()).unwrap();
        let peak = rec.peak_power();
        let storage_max = rec
            .t
            .iter()
            .zip(&rec.power)
            .filter(|(t, _)| **t > 2e-9 && **t < 199e-9)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        assert!(storage_max < 1e-6 * peak, "{storage_max} vs {peak}");
        // Photon bookkeeping.
        let left: f64 = rec
            .populations
            .last()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(j, p)| j as f64 * p)
            .sum();
        assert!((rec.emitted_photons + rec.intrinsic_loss + left - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let d = cold_device();
        let opts = RecordOptions {
            dt: Some(1e-9),
            ..Default::default()
        };
        assert!(matches!(
            run_schedule(&d, &PulseSchedule::idle(0.0, 10e-9), &opts),
            Err(Error::StepSize { .. })
        ));
    }
}
