use std::f64::consts::PI;

use boussinesq_core::rng::stream;
use boussinesq_core::spectral::{psi_state, sigma_state, TORUS_AREA};
use boussinesq_core::{ModeIndex, PhysicsParams, Spectral, SpectralState};
use num_complex::Complex64;
use proptest::prelude::*;

/// Grid points in `to_physical` order (`x1` slow).
fn grid(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = 2.0 * PI / n as f64;
    (0..n).flat_map(move |i| (0..n).map(move |j| (i as f64 * h, j as f64 * h)))
}

fn random(spec: &Spectral, id: u64) -> SpectralState {
    spec.random_state(&mut stream(5, id), 1.0, 1.0)
}

#[test]
fn biot_savart_inverts_curl_modewise() {
    let spec = Spectral::new(32).unwrap();
    let w = random(&spec, 0).w;
    let (u1, u2) = spec.biot_savart(&w).unwrap();
    let i = Complex64::i();
    let mut worst: f64 = 0.0;
    for k in spec.canonical_modes() {
        let curl = i * k.k1 as f64 * u2.get(k) - i * k.k2 as f64 * u1.get(k);
        worst = worst.max((curl - w.get(k)).norm());
        let div = k.k1 as f64 * u1.get(k) + k.k2 as f64 * u2.get(k);
        assert!(div.norm() < 1e-12);
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn biot_savart_single_mode_support() {
    let spec = Spectral::new(16).unwrap();
    let zero = spec.zero_field();
    let (u1, u2) = spec.biot_savart(&zero).unwrap();
    assert_eq!(u1.max_abs() + u2.max_abs(), 0.0);
    let k = ModeIndex::new(1, 0);
    let w = psi_state(16, k, 0).w;
    let (u1, u2) = spec.biot_savart(&w).unwrap();
    for m in spec.canonical_modes() {
        if m != k {
            assert_eq!(u1.get(m).norm() + u2.get(m).norm(), 0.0, "{m}");
        }
    }
    assert_eq!(u1.get(k), Complex64::new(0.0, 0.0));
    assert!(u2.get(k).norm() > 0.0);
}

#[test]
fn self_advection_of_single_mode_vanishes() {
    let spec = Spectral::new(32).unwrap();
    for k in [ModeIndex::new(1, 0), ModeIndex::new(2, -3)] {
        let mut u = psi_state(32, k, 0);
        u.theta = sigma_state(32, k, 1).theta;
        let b = spec.nonlinear(&u, &u).unwrap();
        assert!(b.max_abs() < 1e-13, "{k}: {}", b.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn b_is_skew_and_energy_neutral(n in prop::sample::select(vec![12usize, 16, 24, 32]), seed in any::<u64>()) {
        let spec = Spectral::new(n).unwrap();
        let mk = |id| spec.random_state(&mut stream(seed, id), 1.0, 0.5);
        let (u, v, w) = (mk(0), mk(1), mk(2));
        let buv = spec.nonlinear(&u, &v).unwrap();
        let buw = spec.nonlinear(&u, &w).unwrap();
        let scale = u.norm_l2() * v.norm_l2() * w.norm_l2() * n as f64;
        prop_assert!((buv.inner(&w) + buw.inner(&v)).abs() <= 1e-10 * scale);
        prop_assert!(buv.inner(&v).abs() <= 1e-10 * scale);
    }

    #[test]
    fn projections_are_orthogonal(seed in any::<u64>(), big_n in 1u32..12) {
        let spec = Spectral::new(32).unwrap();
        let u = spec.random_state(&mut stream(seed, 0), 1.0, 1.0);
        let p = spec.project_p(&u, big_n);
        let q = spec.project_q(&u, big_n);
        prop_assert!(p.inner(&q).abs() <= 1e-12 * u.inner(&u));
        prop_assert!(p.plus(1.0, &q).plus(-1.0, &u).max_abs() == 0.0);
    }

    #[test]
    fn physical_round_trip(seed in any::<u64>()) {
        let spec = Spectral::new(16).unwrap();
        let f = spec.random_state(&mut stream(seed, 0), 1.0, 1.0).w;
        let back = spec.from_physical(&spec.to_physical(&f)).unwrap();
        let mut d = back.clone();
        d.axpy(-1.0, &f);
        prop_assert!(d.max_abs() < 1e-13);
    }
}

#[test]
fn a_scales_by_wavenumber_and_matches_parseval() {
    let spec = Spectral::new(16).unwrap();
    let p = PhysicsParams::default();
    assert_eq!(spec.apply_a(&spec.zero_state(), &p).max_abs(), 0.0);
    let k = ModeIndex::new(1, 1);
    let mut u = spec.zero_state();
    u.w.set_mode(k, Complex64::new(0.3, -0.7));
    let au = spec.apply_a(&u, &p);
    assert!((au.w.get(k) - 2.0 * u.w.get(k)).norm() < 1e-15);

    let p = PhysicsParams::new(0.7, 1.9, 1.3).unwrap();
    let u = random(&spec, 1);
    let au = spec.apply_a(&u, &p);
    // full-lattice Parseval sum, both k and -k
    let c = spec.cutoff();
    let mut parseval = 0.0;
    for k1 in -c..=c {
        for k2 in -c..=c {
            let k = ModeIndex::new(k1, k2);
            let k2n = k.norm_sq() as f64;
            parseval += k2n * (p.nu1 * u.w.get(k).norm_sqr() + p.nu2 * u.theta.get(k).norm_sqr());
        }
    }
    parseval *= TORUS_AREA;
    let got = au.inner(&u);
    assert!((got - parseval).abs() <= 1e-12 * parseval, "{got} vs {parseval}");
}

#[test]
fn g_differentiates_temperature_in_x() {
    let n = 16;
    let spec = Spectral::new(n).unwrap();
    let p = PhysicsParams::default();
    assert_eq!(spec.apply_g(&spec.zero_state(), &p).max_abs(), 0.0);
    let sin_x: Vec<f64> = grid(n).map(|(x, _)| x.sin()).collect();
    let mut u = spec.zero_state();
    u.theta = spec.from_physical(&sin_x).unwrap();
    let gw = spec.to_physical(&spec.apply_g(&u, &p).w);
    for ((x, _), v) in grid(n).zip(&gw) {
        assert!((v - x.cos()).abs() < 1e-13);
    }
    let mut u = spec.zero_state();
    u.theta = sigma_state(n, ModeIndex::new(0, 1), 0).theta;
    assert_eq!(spec.apply_g(&u, &p).max_abs(), 0.0);
}

#[test]
fn drift_is_sum_of_parts() {
    let spec = Spectral::new(24).unwrap();
    let p = PhysicsParams::new(1.0, 0.5, 2.0).unwrap();
    assert_eq!(spec.drift(&spec.zero_state(), &p).unwrap().max_abs(), 0.0);
    let u = random(&spec, 2);
    let mut parts = spec.apply_a(&u, &p).scaled(-1.0);
    parts.axpy(-1.0, &spec.nonlinear(&u, &u).unwrap());
    parts.axpy(1.0, &spec.apply_g(&u, &p));
    let f = spec.drift(&u, &p).unwrap();
    assert!(f.plus(-1.0, &parts).max_abs() <= 1e-14 * parts.max_abs());

    let single = psi_state(24, ModeIndex::new(2, 1), 1);
    let f = spec.drift(&single, &p).unwrap();
    let minus_a = spec.apply_a(&single, &p).scaled(-1.0);
    assert!(f.plus(-1.0, &minus_a).max_abs() < 1e-13);
}

#[test]
fn weighted_norm_examples() {
    let n = 16;
    let spec = Spectral::new(n).unwrap();
    let p = PhysicsParams::default();
    assert_eq!(spec.weighted_norm(&spec.zero_state(), &p, 0.0).unwrap(), 0.0);
    let cos_x: Vec<f64> = grid(n).map(|(x, _)| x.cos()).collect();
    let mut u = spec.zero_state();
    u.w = spec.from_physical(&cos_x).unwrap();
    let got = spec.weighted_norm(&u, &p, 0.0).unwrap();
    assert!((got - (2.0 * PI * PI).sqrt()).abs() < 1e-12);

    let u = random(&spec, 3);
    assert!(spec.weighted_norm(&u, &p, 1.0).unwrap() >= spec.weighted_norm(&u, &p, 0.0).unwrap());
    assert!(spec.weighted_norm(&u, &p, -1.0).is_err());

    let p2 = PhysicsParams::new(2.0, 3.0, 0.5).unwrap();
    let zeta = p2.zeta_star();
    assert!((zeta - 24.0).abs() < 1e-15);
    let direct = (zeta * u.w.inner(&u.w) + u.theta.inner(&u.theta)).sqrt();
    assert!((spec.weighted_norm(&u, &p2, 0.0).unwrap() - direct).abs() < 1e-12 * direct);
}

#[test]
fn projection_boundary_is_inclusive() {
    let spec = Spectral::new(32).unwrap();
    let k = ModeIndex::new(3, 4);
    let u = psi_state(32, k, 0);
    assert_eq!(spec.project_p(&u, 5), u);
    assert_eq!(spec.project_q(&u, 5).max_abs(), 0.0);
    assert_eq!(spec.project_p(&u, 4).max_abs(), 0.0);
    let v = random(&spec, 4);
    assert_eq!(spec.project_p(&v, 1000), v);
}

#[test]
fn rejects_bad_resolution() {
    assert!(Spectral::new(2).is_err());
    let a = Spectral::new(16).unwrap();
    let b = Spectral::new(24).unwrap();
    assert!(a.nonlinear(&a.zero_state(), &b.zero_state()).is_err());
}
