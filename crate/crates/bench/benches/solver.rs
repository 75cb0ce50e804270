use std::hint::black_box;

use boussinesq_core::integrator::{RecordOptions, SchemeKind, StepScheme};
use boussinesq_core::noise::{sample_subordinator, subordinated_increments};
use boussinesq_core::rng::stream;
use boussinesq_core::spectral::RealBasis;
use boussinesq_core::tangent::malliavin_backward;
use boussinesq_core::{NoiseModel, PhysicsParams, Spectral, Stepper, SubordinatorSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn stepper(n: usize, dt: f64) -> Stepper {
    Stepper::new(
        Spectral::new(n).unwrap(),
        PhysicsParams::default(),
        StepScheme::new(SchemeKind::EtdEuler, dt).unwrap(),
    )
    .unwrap()
}

fn nonlinear(c: &mut Criterion) {
    let mut g = c.benchmark_group("nonlinear");
    for n in [32, 64, 128] {
        let spec = Spectral::new(n).unwrap();
        let u = spec.random_state(&mut stream(1, 0), 1.0, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| spec.nonlinear(black_box(&u), black_box(&u)).unwrap())
        });
    }
    g.finish();
}

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("deterministic_step");
    for n in [32, 64, 128] {
        let st = stepper(n, 1e-3);
        let u = st.spectral().random_state(&mut stream(1, 0), 1.0, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| st.deterministic_step(black_box(&u)).unwrap())
        });
    }
    g.finish();
}

fn malliavin(c: &mut Criterion) {
    let st = stepper(32, 1e-2);
    let model = NoiseModel::default();
    let horizon = 1.0;
    let path = sample_subordinator(&SubordinatorSpec::default(), horizon, &mut stream(2, 0)).unwrap();
    let incs = subordinated_increments(&path, model.dim(), &mut stream(2, 1)).unwrap();
    let u0 = st.spectral().random_state(&mut stream(2, 2), 1.0, 1.0);
    let traj = st.simulate(&u0, horizon, &model, &incs, RecordOptions::full()).unwrap();
    let basis = RealBasis::low_modes(st.spectral(), 2);
    c.bench_function("malliavin_backward_n2_32", |b| {
        b.iter(|| malliavin_backward(&st, &traj, &model, 0, traj.n_steps, &basis).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = nonlinear, step, malliavin
}
criterion_main!(benches);
