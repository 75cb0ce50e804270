use std::f64::consts::PI;

use boussinesq_core::integrator::{RecordOptions, SchemeKind, StepScheme, Trajectory};
use boussinesq_core::noise::{sample_subordinator, subordinated_increments, LevyIncrement, SubordinatorPath};
use boussinesq_core::rng::stream;
use boussinesq_core::spectral::{sigma_state, RealBasis};
use boussinesq_core::tangent::{
    adjoint_backward, control_and_residual, jacobian_forward, jacobian_forward_idx, malliavin_backward,
    malliavin_forward, min_eigen_constrained, qn_decay_check, second_variation,
};
use boussinesq_core::{ModeIndex, NoiseModel, PhysicsParams, Spectral, SpectralState, Stepper, SubordinatorSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

const N: usize = 16;
const DT: f64 = 0.01;

fn stepper() -> Stepper {
    let scheme = StepScheme::new(SchemeKind::EtdEuler, DT).unwrap();
    Stepper::new(Spectral::new(N).unwrap(), PhysicsParams::default(), scheme).unwrap()
}

fn random(st: &Stepper, seed: u64, id: u64, norm: f64) -> SpectralState {
    let u = st.spectral().random_state(&mut stream(seed, id), 1.0, 2.0);
    u.scaled(norm / st.norm(&u))
}

fn increments(seed: u64, horizon: f64, model: &NoiseModel) -> Vec<LevyIncrement> {
    let path = sample_subordinator(&SubordinatorSpec::default(), horizon, &mut stream(seed, 100)).unwrap();
    subordinated_increments(&path, model.dim(), &mut stream(seed, 101)).unwrap()
}

fn final_state(st: &Stepper, u0: &SpectralState, t: f64, model: &NoiseModel, incs: &[LevyIncrement]) -> SpectralState {
    st.simulate(u0, t, model, incs, RecordOptions::default())
        .unwrap()
        .final_state()
        .clone()
}

fn base(st: &Stepper, seed: u64, t: f64) -> (SpectralState, Vec<LevyIncrement>, Trajectory) {
    let model = NoiseModel::default();
    let u0 = random(st, seed, 0, 1.0);
    let incs = increments(seed, t, &model);
    let traj = st.simulate(&u0, t, &model, &incs, RecordOptions::full()).unwrap();
    (u0, incs, traj)
}

#[test]
fn zero_direction_stays_zero() {
    let st = stepper();
    let (_, _, traj) = base(&st, 1, 0.5);
    let z = st.spectral().zero_state();
    assert_eq!(jacobian_forward(&st, &traj, &z, 0.0, 0.5).unwrap().max_abs(), 0.0);
    assert_eq!(adjoint_backward(&st, &traj, &z, 0.0, 0.5).unwrap().max_abs(), 0.0);
    let partial = st
        .simulate(&z, 0.5, &NoiseModel::default(), &[], RecordOptions::default())
        .unwrap();
    assert!(jacobian_forward(&st, &partial, &z, 0.0, 0.5).is_err());
    assert!(jacobian_forward(&st, &traj, &z, 0.4, 0.2).is_err());
}

#[test]
fn tangent_at_rest_follows_the_modal_recurrence() {
    let st = stepper();
    let p = *st.params();
    let zero = st.spectral().zero_state();
    let traj = st
        .simulate(&zero, 1.0, &NoiseModel::default(), &[], RecordOptions::full())
        .unwrap();

    // θ in mode (0,1): the buoyancy term vanishes, pure heat decay
    let k = ModeIndex::new(0, 1);
    let xi = sigma_state(N, k, 0);
    let out = jacobian_forward(&st, &traj, &xi, 0.0, 1.0).unwrap();
    assert!((out.theta.get(k) - xi.theta.get(k) * (-p.nu2).exp()).norm() < 1e-14);
    assert_eq!(out.w.max_abs(), 0.0);

    // θ in mode (1,0): θ̂' = e θ̂, ŵ' = e ŵ + φ (i k1 g θ̂)
    let k = ModeIndex::new(1, 0);
    let xi = sigma_state(N, k, 1);
    let out = jacobian_forward(&st, &traj, &xi, 0.0, 1.0).unwrap();
    let (et, ew) = ((-p.nu2 * DT).exp(), (-p.nu1 * DT).exp());
    let phi = (1.0 - ew) / p.nu1;
    let mut th = xi.theta.get(k);
    let mut w = Complex64::new(0.0, 0.0);
    for _ in 0..100 {
        let g = Complex64::new(0.0, p.g) * th;
        w = ew * w + phi * g;
        th *= et;
    }
    assert!((out.theta.get(k) - th).norm() < 1e-14);
    assert!((out.w.get(k) - w).norm() < 1e-14, "{} vs {w}", out.w.get(k));
}

#[test]
fn tangent_matches_finite_differences_and_adjoint() {
    let st = stepper();
    let model = NoiseModel::default();
    let t = 0.5;
    let (u0, incs, traj) = base(&st, 2, t);
    let eps = 1e-6;
    for d in 0..4 {
        let xi = random(&st, 2, 10 + d, 1.0);
        let jx = jacobian_forward(&st, &traj, &xi, 0.0, t).unwrap();
        let up = final_state(&st, &u0.plus(eps, &xi), t, &model, &incs);
        let dn = final_state(&st, &u0.plus(-eps, &xi), t, &model, &incs);
        let fd = up.plus(-1.0, &dn).scaled(0.5 / eps);
        let rel = fd.plus(-1.0, &jx).norm_l2() / jx.norm_l2();
        assert!(rel < 1e-6, "fd {rel}");

        let rho = random(&st, 2, 20 + d, 1.0);
        let krho = adjoint_backward(&st, &traj, &rho, 0.0, t).unwrap();
        let (lhs, rhs) = (jx.inner(&rho), xi.inner(&krho));
        assert!(
            (lhs - rhs).abs() <= 1e-12 * jx.norm_l2() * rho.norm_l2(),
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn second_variation_is_symmetric_and_matches_second_differences() {
    let st = stepper();
    let model = NoiseModel::default();
    let t = 0.3;
    let (u0, incs, traj) = base(&st, 3, t);
    let phi = random(&st, 3, 30, 1.0);
    let psi = random(&st, 3, 31, 1.0);
    let a = second_variation(&st, &traj, &phi, &psi, 0.0, t).unwrap();
    let b = second_variation(&st, &traj, &psi, &phi, 0.0, t).unwrap();
    assert!(a.plus(-1.0, &b).max_abs() <= 1e-13 * a.max_abs());

    let e = 1e-3;
    let f = |sp: f64, sq: f64| final_state(&st, &u0.plus(sp * e, &phi).plus(sq * e, &psi), t, &model, &incs);
    let fd = f(1.0, 1.0)
        .plus(-1.0, &f(1.0, -1.0))
        .plus(-1.0, &f(-1.0, 1.0))
        .plus(1.0, &f(-1.0, -1.0))
        .scaled(0.25 / (e * e));
    let rel = fd.plus(-1.0, &a).norm_l2() / a.norm_l2();
    assert!(rel < 1e-5, "{rel}");
}

#[test]
fn no_jump_window_gives_zero_matrix() {
    let st = stepper();
    let model = NoiseModel::default();
    let u0 = random(&st, 4, 0, 1.0);
    let traj = st.simulate(&u0, 0.2, &model, &[], RecordOptions::full()).unwrap();
    let basis = RealBasis::low_modes(st.spectral(), 2);
    for m in [
        malliavin_forward(&st, &traj, &model, 0, 20, &basis).unwrap(),
        malliavin_backward(&st, &traj, &model, 0, 20, &basis).unwrap(),
    ] {
        assert!(m.is_degenerate());
        assert_eq!(m.frobenius(), 0.0);
    }
}

#[test]
fn jump_at_window_end_gives_trace_formula() {
    let st = stepper();
    let model = NoiseModel::default();
    let dell = 0.7;
    let path = SubordinatorPath::from_jumps(0.2, vec![(0.2, dell)]).unwrap();
    let incs = subordinated_increments(&path, model.dim(), &mut stream(5, 5)).unwrap();
    let u0 = random(&st, 5, 0, 1.0);
    let traj = st.simulate(&u0, 0.2, &model, &incs, RecordOptions::full()).unwrap();
    let basis = RealBasis::full(st.spectral());
    // J_{t,t} = I, so trace M = Δℓ Σ α² ‖σ‖² with ‖cos‖² = ‖sin‖² = 2π²
    let exact = dell * model.directions().map(|(_, _, a)| a * a).sum::<f64>() * 2.0 * PI * PI;
    let fwd = malliavin_forward(&st, &traj, &model, 0, 20, &basis).unwrap();
    let bwd = malliavin_backward(&st, &traj, &model, 0, 20, &basis).unwrap();
    for m in [&fwd, &bwd] {
        assert_eq!(m.jumps.len(), 1);
        assert!((m.trace() - exact).abs() < 1e-12 * exact, "{} vs {exact}", m.trace());
        assert_eq!(m.symmetry_defect(), 0.0);
    }
    assert!((&fwd.matrix - &bwd.matrix).norm() < 1e-12 * fwd.frobenius());
}

#[test]
fn forward_and_backward_assembly_agree() {
    let st = stepper();
    let model = NoiseModel::default();
    let (_, _, traj) = base(&st, 6, 0.5);
    let basis = RealBasis::low_modes(st.spectral(), 2);
    let fwd = malliavin_forward(&st, &traj, &model, 0, 50, &basis).unwrap();
    let bwd = malliavin_backward(&st, &traj, &model, 0, 50, &basis).unwrap();
    assert!(!fwd.is_degenerate());
    let rel = (&fwd.matrix - &bwd.matrix).norm() / fwd.frobenius();
    assert!(rel < 1e-10, "{rel}");
    assert!(fwd.min_eigenvalue() >= -1e-10 * fwd.frobenius());
}

#[test]
fn constrained_minimum_dominates_full_minimum() {
    // diag(1, 0) with P the first coordinate: the constraint φ₁² ≥ α²
    // pins the minimum at α².
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
    let got = min_eigen_constrained(&m, &[true, false], 0.5).unwrap();
    assert!((got - 0.25).abs() < 1e-10, "{got}");
    assert_eq!(min_eigen_constrained(&m, &[true, false], 0.0).unwrap(), 0.0);
    assert!(min_eigen_constrained(&m, &[true, false], 1.0).is_err());
    assert!(min_eigen_constrained(&m, &[false, false], 0.5).is_err());

    let a = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    let psd = &a * a.transpose();
    let full = SymmetricEigen::new(psd.clone()).eigenvalues.min();
    let mask = [true, true, true, false, false, false];
    let mut prev = full;
    for alpha in [0.1, 0.4, 0.7, 0.95] {
        let c = min_eigen_constrained(&psd, &mask, alpha).unwrap();
        assert!(c >= prev - 1e-10, "{alpha}: {c} < {prev}");
        prev = c;
    }
}

#[test]
fn weak_control_leaves_the_tangent_free() {
    let st = stepper();
    let model = NoiseModel::default();
    let (_, _, traj) = base(&st, 7, 1.0);
    let xi = random(&st, 7, 40, 1.0);
    let eta = [0.5, 1.0];
    let res = control_and_residual(&st, &traj, &model, &eta, &xi, Some(1e12), 2).unwrap();
    let free = jacobian_forward_idx(&st, &traj, &xi, 0, 50).unwrap();
    let w0 = &res.windows[0];
    assert!(w0.controlled);
    assert!((w0.rho_end - free.norm_l2()).abs() < 1e-8 * free.norm_l2());
    assert!(w0.control_energy < 1e-12);
    assert!(!res.windows[1].controlled);

    let res = control_and_residual(&st, &traj, &model, &eta, &xi, None, 2).unwrap();
    assert!(res.max_closed_form_error() < 1e-8, "{}", res.max_closed_form_error());
    assert_eq!(res.rho_norms().len(), 3);
    assert!(control_and_residual(&st, &traj, &model, &eta, &xi, Some(0.0), 2).is_err());
}

#[test]
fn qn_seed_at_rest_stays_low() {
    let st = stepper();
    let model = NoiseModel::default();
    let zero = st.spectral().zero_state();
    let traj = st.simulate(&zero, 0.5, &model, &[], RecordOptions::full()).unwrap();
    // a seed in H_2 has no Q_2 part, and the linearisation at rest is mode-diagonal
    let seed = sigma_state(N, ModeIndex::new(1, 1), 0);
    let report = qn_decay_check(&st, &traj, &seed, &[2, 3], 50).unwrap();
    assert!(report.qn_sq.iter().flatten().all(|&q| q == 0.0));
    assert!(report.passes());

    // θ on (0,3) feels no buoyancy and decays at rate 2ν|k|² in ‖·‖²
    let seed = sigma_state(N, ModeIndex::new(0, 3), 0);
    let report = qn_decay_check(&st, &traj, &seed, &[1, 2], 50).unwrap();
    for s in &report.early_slopes {
        assert!((s - 18.0).abs() < 1e-6, "{s}");
    }
    assert!(qn_decay_check(&st, &traj, &seed, &[1], 50).is_err());
}
