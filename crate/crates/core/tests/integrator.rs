use boussinesq_core::integrator::{energy_audit, RecordOptions, SchemeKind, StepScheme};
use boussinesq_core::noise::{sample_subordinator, subordinated_increments, LevyIncrement, SubordinatorPath};
use boussinesq_core::rng::stream;
use boussinesq_core::spectral::sigma_state;
use boussinesq_core::{ModeIndex, NoiseModel, PhysicsParams, Spectral, SpectralState, Stepper, SubordinatorSpec};

fn stepper(n: usize, kind: SchemeKind, dt: f64) -> Stepper {
    let scheme = StepScheme::new(kind, dt).unwrap();
    Stepper::new(Spectral::new(n).unwrap(), PhysicsParams::default(), scheme).unwrap()
}

fn noisy_increments(seed: u64, horizon: f64, d: usize) -> Vec<LevyIncrement> {
    let path = sample_subordinator(&SubordinatorSpec::default(), horizon, &mut stream(seed, 0)).unwrap();
    subordinated_increments(&path, d, &mut stream(seed, 1)).unwrap()
}

fn random_state(st: &Stepper, seed: u64, norm: f64) -> SpectralState {
    let u = st.spectral().random_state(&mut stream(seed, 2), 1.0, 2.0);
    u.scaled(norm / st.norm(&u))
}

#[test]
fn zero_stays_zero_without_noise() {
    let st = stepper(16, SchemeKind::EtdEuler, 0.01);
    let traj = st
        .simulate(
            &st.spectral().zero_state(),
            1.0,
            &NoiseModel::default(),
            &[],
            RecordOptions::default(),
        )
        .unwrap();
    assert_eq!(traj.final_state().max_abs(), 0.0);
    assert!(traj.norms.iter().all(|&n| n == 0.0));
}

#[test]
fn single_temperature_mode_decays_at_the_scheme_rate() {
    // θ = σ^0_{(0,1)}: no advection, no buoyancy, pure heat flow.
    let k = ModeIndex::new(0, 1);
    let p = PhysicsParams::default();
    let (dt, t) = (0.01, 1.0);
    let u0 = sigma_state(16, k, 0);
    let c0 = u0.theta.get(k);
    let model = NoiseModel::default();
    for kind in [SchemeKind::EtdEuler, SchemeKind::ImexEuler] {
        let st = stepper(16, kind, dt);
        let out = st.simulate(&u0, t, &model, &[], RecordOptions::default()).unwrap();
        let got = out.final_state().theta.get(k);
        let n = (t / dt).round() as i32;
        let factor = match kind {
            SchemeKind::EtdEuler => (-p.nu2 * t).exp(),
            SchemeKind::ImexEuler => (1.0 + p.nu2 * dt).powi(-n),
        };
        assert!((got - c0 * factor).norm() < 1e-13, "{kind:?}");
        assert_eq!(out.final_state().w.max_abs(), 0.0);
    }
}

#[test]
fn noiseless_energy_is_nonincreasing() {
    let st = stepper(32, SchemeKind::EtdEuler, 0.005);
    let u0 = random_state(&st, 3, 1.0);
    let model = NoiseModel::default();
    let traj = st.simulate(&u0, 2.0, &model, &[], RecordOptions::default()).unwrap();
    // the buoyancy coupling can move energy between w and θ, so the weighted
    // norm with ζ* is the monotone one
    for w in traj.norms.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
    assert!(traj.norms.last().unwrap() < &traj.norms[0]);
}

#[test]
fn same_inputs_give_bitwise_identical_trajectories() {
    let st = stepper(24, SchemeKind::EtdEuler, 0.01);
    let model = NoiseModel::default();
    let incs = noisy_increments(5, 1.0, model.dim());
    let u0 = random_state(&st, 5, 2.0);
    let a = st.simulate(&u0, 1.0, &model, &incs, RecordOptions::full()).unwrap();
    let b = st.simulate(&u0, 1.0, &model, &incs, RecordOptions::full()).unwrap();
    assert_eq!(a.final_state(), b.final_state());
    assert_eq!(a.norms, b.norms);
    assert_eq!(a.jumps.len(), b.jumps.len());
}

#[test]
fn dissipation_dominates_at_small_amplitude() {
    // Linearised about 0 the slowest modes decay like e^{-ν t} up to the
    // buoyancy coupling.
    let st = stepper(16, SchemeKind::EtdEuler, 0.01);
    let u0 = random_state(&st, 6, 1e-3);
    let traj = st
        .simulate(&u0, 4.0, &NoiseModel::default(), &[], RecordOptions::default())
        .unwrap();
    let ratio = traj.norms.last().unwrap() / traj.norms[0];
    assert!(ratio < 2.0 * (-4.0f64).exp(), "{ratio}");
    assert!(ratio > 0.0);
}

#[test]
fn jumps_are_absorbed_in_their_step() {
    let st = stepper(16, SchemeKind::EtdEuler, 0.1);
    let model = NoiseModel::default();
    let path = SubordinatorPath::from_jumps(1.0, vec![(0.25, 1.0), (0.3, 1.0), (0.5, 1.0)]).unwrap();
    let incs = subordinated_increments(&path, model.dim(), &mut stream(1, 1)).unwrap();
    let traj = st
        .simulate(
            &st.spectral().zero_state(),
            1.0,
            &model,
            &incs,
            RecordOptions::default(),
        )
        .unwrap();
    let idx: Vec<usize> = traj.jumps.iter().map(|j| j.index).collect();
    assert_eq!(idx, vec![3, 3, 5]);
    assert_eq!(traj.norms[2], 0.0);
    assert!(traj.norms[3] > 0.0);
}

#[test]
fn blow_up_is_reported() {
    let mut st = stepper(16, SchemeKind::EtdEuler, 0.01);
    st.ceiling = 1e-3;
    let u0 = random_state(&st, 7, 1.0);
    assert!(st
        .simulate(&u0, 0.1, &NoiseModel::default(), &[], RecordOptions::default())
        .is_err());
    assert!(st.scheme().steps_for(0.015).is_err());
}

#[test]
fn energy_audit_balances() {
    let model = NoiseModel::default();
    let st = stepper(16, SchemeKind::EtdEuler, 0.01);

    let k = ModeIndex::new(0, 1);
    let traj = st
        .simulate(&sigma_state(16, k, 0), 0.5, &model, &[], RecordOptions::full())
        .unwrap();
    let audit = energy_audit(&st, &traj, &model).unwrap();
    assert!(audit.max_residual_rate < 1e-12, "{}", audit.max_residual_rate);
    assert_eq!(audit.jumps_checked, 0);
    assert_eq!(audit.quadratic_variation, 0.0);

    let incs = noisy_increments(8, 1.0, model.dim());
    let u0 = random_state(&st, 8, 1.0);
    let traj = st.simulate(&u0, 1.0, &model, &incs, RecordOptions::full()).unwrap();
    let audit = energy_audit(&st, &traj, &model).unwrap();
    assert!(audit.max_jump_defect < 1e-10);
    assert_eq!(audit.jumps_checked, incs.len());
    let qv: f64 = incs
        .iter()
        .map(|j| {
            let d = model.forcing_increment(16, &j.dw).unwrap();
            d.theta.inner(&d.theta)
        })
        .sum();
    assert!((audit.quadratic_variation - qv).abs() <= 1e-12 * qv.max(1.0));

    let partial = st.simulate(&u0, 1.0, &model, &incs, RecordOptions::default()).unwrap();
    assert!(energy_audit(&st, &partial, &model).is_err());
}

#[test]
fn deterministic_error_is_first_order() {
    let model = NoiseModel::default();
    let t = 0.5;
    let u0 = random_state(&stepper(24, SchemeKind::EtdEuler, 0.01), 9, 0.5);
    let run = |kind, dt| {
        stepper(24, kind, dt)
            .simulate(&u0, t, &model, &[], RecordOptions::default())
            .unwrap()
            .final_state()
            .clone()
    };
    for kind in [SchemeKind::EtdEuler, SchemeKind::ImexEuler] {
        let reference = run(kind, 1e-4);
        let errs: Vec<f64> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&dt| run(kind, dt).plus(-1.0, &reference).norm_l2())
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 1.0).abs() < 0.2, "{kind:?}: order {order}");
        }
    }
}
