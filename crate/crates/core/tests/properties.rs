use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use photon_source::constants::angular;
use photon_source::density::DensityMatrix;
use photon_source::device::Device;
use photon_source::dynamics::{run_schedule_from, DrivePulse, RecordOptions};
use photon_source::fidelity::{loss_budget, state_fidelity, Target};
use photon_source::io::Table;
use photon_source::schedule::{FluxSegment, PulseSchedule};
use photon_source::shaping::{flux_from_rate, rate_from_target, verify_shape, Branch, RateInverter, Wavepacket};

fn cold(levels: usize) -> Device {
    let mut d = Device::paper2017();
    d.transmon.t_eff = 0.0;
    d.transmon.levels = levels;
    d
}

fn random_density(dim: usize, re: &[f64], im: &[f64]) -> DensityMatrix {
    let a = DMatrix::from_fn(dim, dim, |i, j| C64::new(re[i * dim + j], im[i * dim + j]));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).unwrap()
}

fn density_pair() -> impl Strategy<Value = (DensityMatrix, DensityMatrix)> {
    (2usize..=4).prop_flat_map(|dim| {
        let entries = move || prop::collection::vec(-1.0..1.0f64, dim * dim);
        (entries(), entries(), entries(), entries())
            .prop_filter("non-degenerate", |(a, _, c, _)| {
                a.iter().any(|x| x.abs() > 0.1) && c.iter().any(|x| x.abs() > 0.1)
            })
            .prop_map(move |(a, b, c, e)| (random_density(dim, &a, &b), random_density(dim, &c, &e)))
    })
}

fn unit_vector(re: &[f64], im: &[f64]) -> Vec<C64> {
    let v: Vec<C64> = re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trace_and_positivity_are_preserved(
        flux in -0.5..0.5f64,
        drive_mhz in 0.0..30.0f64,
        duration_ns in 100.0..500.0f64,
        t_mk in 0.0..120.0f64,
        hop in -0.5..0.5f64,
    ) {
        let mut d = Device::paper2017();
        d.transmon.t_eff = t_mk * 1e-3;
        let duration = duration_ns * 1e-9;
        let s = PulseSchedule::idle(flux, duration)
            .with_drive(DrivePulse::square(angular(drive_mhz * 1e6), 10e-9, 0.5 * duration))
            .with_flux(FluxSegment::square(hop, 0.3 * duration, 0.4 * duration));
        let p = &d.transmon;
        let init = DensityMatrix::thermal(p.levels, p.omega01, p.alpha, p.t_eff);
        let opts = RecordOptions { sample_interval: 5e-9, ..RecordOptions::default() };
        let (rec, fin) = run_schedule_from(&d, &s, &init, &opts).unwrap();
        for pops in &rec.populations {
            prop_assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            prop_assert!(pops.iter().all(|&x| x > -1e-8));
        }
        prop_assert!(fin.min_eigenvalue() > -1e-8);
        prop_assert!((fin.trace().re - 1.0).abs() < 1e-8 && fin.trace().im.abs() < 1e-10);
    }

    #[test]
    fn photons_are_accounted_for_without_drive(
        flux in -0.5..0.5f64,
        p1 in 0.0..1.0f64,
        p2 in 0.0..1.0f64,
    ) {
        let d = cold(3);
        let total = 1.0 + p1 + p2;
        let pops = [1.0 / total, p1 / total, p2 / total];
        let initial: f64 = pops.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        let opts = RecordOptions { sample_interval: 10e-9, ..RecordOptions::default() };
        let (rec, fin) = run_schedule_from(
            &d,
            &PulseSchedule::idle(flux, 500e-9),
            &DensityMatrix::from_diagonal(&pops),
            &opts,
        )
        .unwrap();
        let left: f64 = fin.populations().iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        prop_assert!((rec.emitted_photons + rec.intrinsic_loss + left - initial).abs() < 1e-6);
    }

    #[test]
    fn two_level_decay_is_exponential(flux in -0.3..0.3f64) {
        let mut d = cold(2);
        d.transmon = d.transmon.without_dissipation();
        let g = d.gamma1(flux);
        let opts = RecordOptions { sample_interval: 2e-9, ..RecordOptions::default() };
        let (rec, _) =
            run_schedule_from(&d, &PulseSchedule::idle(flux, 300e-9), &DensityMatrix::basis(2, 1), &opts).unwrap();
        for (t, p) in rec.t.iter().zip(&rec.populations) {
            prop_assert!((p[1] - (-g * t).exp()).abs() < 1e-6);
        }
        prop_assert!((rec.emitted_photons - (1.0 - (-g * 300e-9).exp())).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_inversion_is_exact(fraction in 1e-4..1.0f64, negative in any::<bool>()) {
        let d = Device::paper2017();
        let branch = if negative { Branch::Negative } else { Branch::Positive };
        let inv = RateInverter::new(&d, branch).unwrap();
        let r = fraction * inv.max_rate();
        let f = inv.flux(r).unwrap();
        prop_assert!((d.gamma1(f) / r - 1.0).abs() < 1e-9);
        prop_assert_eq!(f < 0.0, negative);
    }

    #[test]
    fn emission_rate_has_flux_symmetries(flux in -0.5..0.5f64) {
        let d = Device::paper2017();
        let g = d.gamma1(flux);
        prop_assert!(g >= 0.0);
        prop_assert!((d.gamma1(-flux) - g).abs() <= 1e-9 * d.gamma1_peak().1);
        prop_assert!((d.gamma1(flux + 1.0) - g).abs() <= 1e-9 * d.gamma1_peak().1);
    }

    #[test]
    fn fidelity_is_bounded_and_symmetric((rho, sigma) in density_pair()) {
        let f = state_fidelity(&rho, &sigma).unwrap();
        let g = state_fidelity(&sigma, &rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - g).abs() < 1e-6);
        prop_assert!((state_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fidelity_of_pure_states_is_overlap(
        a in prop::collection::vec(-1.0..1.0f64, 6),
        b in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        prop_assume!(a[..3].iter().any(|x| x.abs() > 0.1) && b[..3].iter().any(|x| x.abs() > 0.1));
        let u = unit_vector(&a[..3], &a[3..]);
        let v = unit_vector(&b[..3], &b[3..]);
        let overlap: C64 = u.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
        let f = state_fidelity(&DensityMatrix::pure(&u), &DensityMatrix::pure(&v)).unwrap();
        prop_assert!((f - overlap.norm()).abs() < 1e-4);
    }

    #[test]
    fn fidelity_of_diagonal_states_is_bhattacharyya(
        p in prop::collection::vec(0.01..1.0f64, 3),
        q in prop::collection::vec(0.01..1.0f64, 3),
    ) {
        let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
        let p: Vec<f64> = p.iter().map(|x| x / sp).collect();
        let q: Vec<f64> = q.iter().map(|x| x / sq).collect();
        let expected: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum();
        let f = state_fidelity(&DensityMatrix::from_diagonal(&p), &DensityMatrix::from_diagonal(&q)).unwrap();
        prop_assert!((f - expected).abs() < 1e-8);
    }

    #[test]
    fn csv_tables_round_trip_bit_exact(rows in prop::collection::vec(prop::collection::vec(any::<f64>(), 3), 0..20)) {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| if x.is_finite() { x } else { 0.0 }).collect())
            .collect();
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push(r.clone());
        }
        let bytes = t.to_bytes();
        let back = Table::from_reader(bytes.as_slice(), "table").unwrap();
        prop_assert_eq!(back.columns, t.columns);
        for (x, y) in back.rows.iter().flatten().zip(rows.iter().flatten()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert_eq!(back.rows.len(), rows.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn feasible_sech_targets_round_trip(width_ns in 150.0..400.0f64, eta in 0.5..0.99f64) {
        let dev = Device::paper2017();
        let inv = RateInverter::new(&dev, Branch::Positive).unwrap();
        let target = Wavepacket::sech(width_ns * 1e-9, 1500e-9, eta, 2e-9, 1501).unwrap();
        let rates = rate_from_target(&target, inv.max_rate(), 0.05).unwrap();
        let peak = rates.gamma1.iter().cloned().fold(0.0, f64::max);
        prop_assume!(peak <= 0.8 * inv.max_rate());
        let traj = flux_from_rate(&dev, &rates, Branch::Positive).unwrap();
        let mut ideal = dev.clone();
        ideal.transmon = ideal.transmon.without_dissipation();
        prop_assert!(verify_shape(&ideal, &traj, &target).unwrap().l2_error < 1e-3);
    }
}

#[test]
fn fock_loss_budget_items_cover_the_total() {
    let d = Device::paper2017();
    let b = loss_budget(&d, Target::Fock, 1e-6, 0.0).unwrap();
    assert!(b.total > 0.0);
    assert!(
        b.remainder.abs() <= 0.1 * b.total,
        "remainder {} of {}",
        b.remainder,
        b.total
    );
}
