use boussinesq_core::noise::{
    check_condition_2_1, gamma_exp_moment, sample_subordinator, stopping_times, subordinated_increments,
    SubordinatorFamily, SubordinatorPath,
};
use boussinesq_core::rng::{purpose, stream, stream_id};
use boussinesq_core::stats::summarize;
use boussinesq_core::{ModeIndex, NoiseModel, PhysicsParams, Spectral, SubordinatorSpec};
use statrs::distribution::{ContinuousCDF, Normal};

const N_MC: usize = 10_000;

fn terminal_values(spec: &SubordinatorSpec, horizon: f64, seed: u64) -> Vec<f64> {
    (0..N_MC as u64)
        .map(|i| {
            let path =
                sample_subordinator(spec, horizon, &mut stream(seed, stream_id(purpose::SUBORDINATOR, 1, i))).unwrap();
            path.value_at(horizon)
        })
        .collect()
}

#[test]
fn gamma_mean_matches_shape_over_rate() {
    for spec in [SubordinatorSpec::gamma(1.0, 1.0), SubordinatorSpec::gamma(2.0, 4.0)] {
        let s = summarize(&terminal_values(&spec, 1.0, 3));
        let exact = spec.a / spec.b;
        assert!(
            (s.mean - exact).abs() <= 3.0 * s.std_error,
            "{} vs {exact} (se {})",
            s.mean,
            s.std_error
        );
    }
}

#[test]
fn gamma_mgf_matches_closed_form() {
    let spec = SubordinatorSpec::gamma(1.0, 1.0);
    let ell = terminal_values(&spec, 1.0, 4);
    // ζ = 0.25 has finite variance, so the 3 SE band is meaningful
    let s = summarize(&ell.iter().map(|l| (0.25 * l).exp()).collect::<Vec<_>>());
    let exact = (1.0f64 / 0.75).powf(1.0);
    assert!((s.mean - exact).abs() <= 3.0 * s.std_error, "{} vs {exact}", s.mean);
    assert!((spec.exp_moment(0.25, 1.0).unwrap() - exact).abs() < 1e-14);
    // ζ = 0.5: finite mean but infinite variance; a loose relative band
    let m = ell.iter().map(|l| (0.5 * l).exp()).sum::<f64>() / ell.len() as f64;
    assert!((m - 2.0).abs() < 0.1 * 2.0, "{m}");
    assert!(spec.exp_moment(1.0, 1.0).is_none());
}

#[test]
fn truncated_family_approaches_gamma_mean() {
    let spec = SubordinatorSpec {
        family: SubordinatorFamily::TruncatedGamma,
        epsilon: 1e-4,
        ..SubordinatorSpec::gamma(1.0, 1.0)
    };
    let s = summarize(&terminal_values(&spec, 1.0, 5));
    // mass below ε contributes a ε to the mean
    let exact = 1.0 - spec.epsilon;
    assert!((s.mean - exact).abs() <= 3.0 * s.std_error, "{}", s.mean);
}

#[test]
fn paths_are_monotone_and_reproducible() {
    let spec = SubordinatorSpec::default();
    let a = sample_subordinator(&spec, 3.0, &mut stream(9, 1)).unwrap();
    let b = sample_subordinator(&spec, 3.0, &mut stream(9, 1)).unwrap();
    assert_eq!(a, b);
    assert!(a.jump_sizes().iter().all(|&s| s > 0.0));
    assert!(a.jump_times().windows(2).all(|w| w[0] < w[1]));
    let mut prev = 0.0;
    for i in 0..=300 {
        let v = a.value_at(i as f64 * 0.01);
        assert!(v >= prev);
        prev = v;
    }
    assert!(sample_subordinator(&spec, 0.0, &mut stream(9, 1)).is_err());
}

#[test]
fn path_csv_round_trip() {
    let spec = SubordinatorSpec::default();
    let a = sample_subordinator(&spec, 1.0, &mut stream(10, 1)).unwrap();
    let mut buf = Vec::new();
    a.write_csv(&mut buf, &spec, 10, "0123456789abcdef").unwrap();
    assert!(String::from_utf8_lossy(&buf).contains("0123456789abcdef"));
    let back = SubordinatorPath::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.digest(), a.digest());
}

#[test]
fn zero_path_gives_no_increments() {
    let path = SubordinatorPath::zero(1.0);
    assert!(subordinated_increments(&path, 4, &mut stream(1, 1)).unwrap().is_empty());
    assert!(subordinated_increments(&path, 0, &mut stream(1, 1)).is_err());
}

fn single_jump_draws() -> Vec<f64> {
    let path = SubordinatorPath::from_jumps(1.0, vec![(0.5, 4.0)]).unwrap();
    (0..N_MC as u64)
        .map(|i| subordinated_increments(&path, 1, &mut stream(12, i)).unwrap()[0].dw[0])
        .collect()
}

#[test]
fn single_jump_variance_is_jump_size() {
    let x = single_jump_draws();
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let s = summarize(&sq);
    assert!(
        (s.mean - 4.0).abs() <= 3.0 * s.std_error,
        "{} (se {})",
        s.mean,
        s.std_error
    );
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn increments_are_centred_gaussian() {
    let x = single_jump_draws();
    let law = Normal::new(0.0, 2.0).unwrap();
    // critical value at significance 0.01
    let crit = 1.628 / (x.len() as f64).sqrt();
    let d = ks_statistic(&x, |v| law.cdf(v));
    assert!(d < crit, "D = {d}, critical {crit}");
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let d = ks_statistic(&neg, |v| law.cdf(v));
    assert!(d < crit, "reflected D = {d}, critical {crit}");
}

#[test]
fn forcing_hits_only_temperature() {
    let model = NoiseModel::default();
    let n = 16;
    let spec = Spectral::new(n).unwrap();
    assert_eq!(model.dim(), 4);
    assert_eq!(model.forcing_increment(n, &[0.0; 4]).unwrap().max_abs(), 0.0);
    let f = model.forcing_increment(n, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(f.w.max_abs(), 0.0);
    let vals = spec.to_physical(&f.theta);
    let h = 2.0 * std::f64::consts::PI / n as f64;
    for (idx, v) in vals.iter().enumerate() {
        let x1 = (idx / n) as f64 * h;
        assert!((v - x1.cos()).abs() < 1e-14);
    }
    let g = model.forcing_increment(n, &[0.3, -1.2, 2.0, 0.7]).unwrap();
    assert_eq!(g.w.max_abs(), 0.0);
    assert!(model.forcing_increment(n, &[1.0]).is_err());
}

#[test]
fn noise_model_validation() {
    let k = |a, b| ModeIndex::new(a, b);
    assert!(NoiseModel::uniform(vec![k(1, 0), k(-1, 0)], 1.0).is_err());
    assert!(NoiseModel::uniform(vec![k(0, 0)], 1.0).is_err());
    assert!(NoiseModel::new(vec![k(1, 0)], vec![[1.0, 0.0]]).is_err());
    assert!(NoiseModel::new(vec![k(1, 0)], vec![]).is_err());
}

#[test]
fn stopping_times_deterministic_cases() {
    let p = PhysicsParams::default();
    let model = NoiseModel::default();
    let zero = SubordinatorPath::zero(10.0);
    let st = stopping_times(&zero, &p, &model, 0.01, 5).unwrap();
    for (i, e) in st.eta.iter().enumerate() {
        assert!((e - (i + 1) as f64).abs() < 1e-12);
    }
    let path = sample_subordinator(&SubordinatorSpec::default(), 10.0, &mut stream(3, 3)).unwrap();
    let p2 = PhysicsParams::new(2.0, 0.5, 1.0).unwrap();
    let st = stopping_times(&path, &p2, &model, 0.0, 4).unwrap();
    for (i, e) in st.eta.iter().enumerate() {
        assert!((e - (i + 1) as f64 / p2.nu()).abs() < 1e-12);
    }
    assert!(stopping_times(&path, &p, &model, -1.0, 1).is_err());
}

#[test]
fn stopping_times_cross_exactly() {
    let p = PhysicsParams::default();
    let model = NoiseModel::default();
    let path = sample_subordinator(&SubordinatorSpec::default(), 50.0, &mut stream(4, 4)).unwrap();
    let kappa = 1.0 / 1280.0;
    let st = stopping_times(&path, &p, &model, kappa, 5).unwrap();
    assert!(!st.truncated);
    for inc in st.increments(&path) {
        assert!((inc - 1.0).abs() < 1e-9, "{inc}");
    }
}

#[test]
fn stopping_moment_closed_form_agrees_with_mc() {
    let p = PhysicsParams::default();
    let model = NoiseModel::default();
    let kappa = 1.0 / 1280.0;
    let c = 8.0 * model.b0() * kappa;
    let exact = gamma_exp_moment(p.nu(), c, 1.0, 1.0, 10.0).unwrap();
    let w: Vec<f64> = (0..4000u64)
        .map(|i| {
            let path = sample_subordinator(&SubordinatorSpec::default(), 8.0, &mut stream(6, i)).unwrap();
            let e = stopping_times(&path, &p, &model, kappa, 1).unwrap().eta[0];
            (10.0 * e).exp()
        })
        .collect();
    let s = summarize(&w);
    assert!(
        (s.mean - exact).abs() <= 4.0 * s.std_error,
        "{} vs {exact} (se {})",
        s.mean,
        s.std_error
    );
}

#[test]
fn condition_2_1_examples() {
    let k = |a, b| ModeIndex::new(a, b);
    assert!(check_condition_2_1(&[k(1, 0), k(0, 1)]).passes());
    let even = check_condition_2_1(&[k(2, 0), k(0, 2)]);
    assert!(!even.passes() && !even.generator);
    let single = check_condition_2_1(&[k(1, 0)]);
    assert!(!single.passes() && !single.non_parallel_pair);
    let r = check_condition_2_1(&[k(1, 0), k(1, 1)]);
    assert!(r.passes() && r.distinct_moduli_pair);
}
