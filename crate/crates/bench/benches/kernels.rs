use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use collapse_bench::{fiber_model, manufactured_problem, newton_config, smooth_potential};
use collapse_core::geometry::{ddbar, ma_density};
use collapse_core::gke::solve_gke;
use collapse_core::integrate::StepConfig;
use collapse_core::krf::{step, FlowModel};

fn bench_ddbar(c: &mut Criterion) {
    let mut group = c.benchmark_group("ddbar");
    for n in [32, 64, 128] {
        let phi = smooth_potential(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &phi, |b, phi| {
            b.iter(|| ma_density(&ddbar(black_box(phi))))
        });
    }
    group.finish();
}

fn bench_newton(c: &mut Criterion) {
    let mut group = c.benchmark_group("gke_newton");
    group.sample_size(10);
    for n in [32, 64] {
        let (omega, f) = manufactured_problem(n);
        let cfg = newton_config();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| solve_gke(black_box(&omega), black_box(&f), &cfg).expect("converges"))
        });
    }
    group.finish();
}

fn bench_fiber_step(c: &mut Criterion) {
    let (spec, state) = fiber_model(16);
    let model = FlowModel::Fiber(spec);
    let cfg = StepConfig::default();
    c.bench_function("fiber_flow_step_16", |b| {
        b.iter(|| step(&model, black_box(&state), 0.01, &cfg).expect("stable step"))
    });
}

criterion_group!(benches, bench_ddbar, bench_newton, bench_fiber_step);
criterion_main!(benches);
