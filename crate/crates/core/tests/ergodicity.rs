use boussinesq_core::ergodicity::{
    eproperty_probe, invariant_statistics, irreducibility_mesh, irreducibility_probe, InvariantConfig, Profile,
};
use boussinesq_core::integrator::{SchemeKind, StepScheme};
use boussinesq_core::noise::increments_digest;
use boussinesq_core::rng::stream;
use boussinesq_core::spectral::sigma_state;
use boussinesq_core::{Lab, ModeIndex, NoiseModel, Observable, PhysicsParams, Spectral, Stepper, SubordinatorSpec};

fn stepper() -> Stepper {
    let scheme = StepScheme::new(SchemeKind::EtdEuler, 0.01).unwrap();
    Stepper::new(Spectral::new(16).unwrap(), PhysicsParams::default(), scheme).unwrap()
}

#[test]
fn lab_noise_is_keyed_by_experiment_and_trajectory() {
    let st = stepper();
    let model = NoiseModel::default();
    let lab = Lab::new(&st, &model, SubordinatorSpec::default(), 11, "0000000000000000");
    let a = lab.noise(1, 0, 2.0).unwrap();
    assert_eq!(increments_digest(&a), increments_digest(&lab.noise(1, 0, 2.0).unwrap()));
    assert_ne!(increments_digest(&a), increments_digest(&lab.noise(1, 1, 2.0).unwrap()));
    assert_ne!(increments_digest(&a), increments_digest(&lab.noise(2, 0, 2.0).unwrap()));
    assert!(a.iter().all(|j| j.dw.len() == model.dim() && j.time <= 2.0));
    assert!(lab.trajectory_subordinator().grid_step >= st.dt());
    let quiet = lab.clone().without_noise();
    assert!(quiet.noise(1, 0, 2.0).unwrap().is_empty());
}

#[test]
fn noiseless_flow_reaches_every_small_ball() {
    let st = stepper();
    let model = NoiseModel::default();
    let lab = Lab::new(&st, &model, SubordinatorSpec::default(), 12, "0000000000000000").without_noise();
    let mesh = irreducibility_mesh(&lab, 1.0).unwrap();
    assert_eq!(mesh[0].1.max_abs(), 0.0);
    for (name, u) in &mesh[1..] {
        assert!(st.norm(u) <= 1.0 + 1e-12, "{name}");
    }
    assert_eq!(irreducibility_mesh(&lab, 0.0).unwrap().len(), 1);

    // ‖U_T‖ ≤ e^{-T} C up to the buoyancy coupling, far below γ at T = 5
    let report = irreducibility_probe(&lab, 1.0, 0.1, 3, &[5.0]).unwrap();
    assert_eq!(report.scalars["min_frequency_t5"], 1.0);
    // all 3 trials hit: one-sided 95% bound is 0.05^{1/3}
    assert!((report.scalars["cp_lower_t5"] - 0.05f64.powf(1.0 / 3.0)).abs() < 1e-9);
    assert!(report.passed());
}

#[test]
fn eproperty_pairs_share_noise_and_gaps_shrink_linearly() {
    let st = stepper();
    let model = NoiseModel::default();
    let lab = Lab::new(&st, &model, SubordinatorSpec::default(), 13, "0000000000000000");
    let u0 = st.spectral().random_state(&mut stream(13, 0), 1.0, 2.0);
    let xi = sigma_state(16, ModeIndex::new(1, 1), 0);
    let phi = Observable::BoundedLipschitz(Profile::Norm);
    let report = eproperty_probe(&lab, &u0, &xi, &[0.1, 0.01, 0.001], &phi, &[0.5, 1.0], 8).unwrap();
    assert!(report.verdict("identical_noise_in_pairs").unwrap().passed);
    assert!(report.verdict("gap_nonincreasing_as_delta_shrinks").unwrap().passed);
    assert!(report.passed(), "{:?}", report.verdicts);
    assert!(eproperty_probe(&lab, &u0, &xi, &[0.1], &Observable::Energy, &[1.0], 2).is_err());
    assert!(eproperty_probe(&lab, &u0, &xi, &[0.1], &phi, &[1.0], 0).is_err());
}

#[test]
fn invariant_statistics_needs_two_starts() {
    let st = stepper();
    let model = NoiseModel::default();
    let lab = Lab::new(&st, &model, SubordinatorSpec::default(), 14, "0000000000000000");
    let u0 = st.spectral().zero_state();
    let cfg = InvariantConfig {
        t_long: 2.0,
        n_batches: 4,
        ..InvariantConfig::default()
    };
    assert!(invariant_statistics(&lab, &[u0.clone()], &cfg).is_err());
    let report = invariant_statistics(&lab, &[u0.clone(), u0.clone()], &cfg).unwrap();
    // noise is keyed per start, so the two series differ but both means are valid
    for obs in Observable::default_set() {
        let m0 = report.scalars[&format!("{}_ic0_mean", obs.label())];
        let m1 = report.scalars[&format!("{}_ic1_mean", obs.label())];
        assert!(m0.is_finite() && m1.is_finite() && (0.0..1.0).contains(&m0));
    }
    let bad = InvariantConfig {
        burn_in: Some(3.0),
        ..cfg
    };
    assert!(invariant_statistics(&lab, &[u0.clone(), u0], &bad).is_err());
}

#[test]
fn bounded_lipschitz_observables_stay_in_unit_interval() {
    let st = stepper();
    let p = *st.params();
    let u = st.spectral().random_state(&mut stream(15, 0), 1.0, 1.0).scaled(1e3);
    for obs in Observable::default_set() {
        let v = obs.eval(st.spectral(), &p, &u);
        assert!((0.0..1.0).contains(&v), "{}", obs.label());
        assert_eq!(obs.eval(st.spectral(), &p, &st.spectral().zero_state()), 0.0);
    }
    let c = Observable::BoundedLipschitz(Profile::Constant { value: 0.3 });
    assert_eq!(c.eval(st.spectral(), &p, &u), 0.3);
    assert!(!Observable::Energy.is_bounded_lipschitz());
}
