use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sdcons_bench::{designed, network, spec, REGIMES};
use sdcons_core::certify::{self, GridSpec, LambdaSet};
use sdcons_core::sim;
use sdcons_core::synthesis;
use sdcons_core::{numerics, Matrix, PlantModel};

fn design(c: &mut Criterion) {
    let mut group = c.benchmark_group("design");
    for (name, h, l2, ln) in REGIMES {
        let s = spec(h, l2, ln);
        group.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| synthesis::design(black_box(s)))
        });
    }
    group.finish();
}

fn certify_grid(c: &mut Criterion) {
    let plant = PlantModel::double_integrator();
    let mut group = c.benchmark_group("certify_grid");
    group.sample_size(20);
    for (name, h, l2, ln) in REGIMES {
        let d = designed(h, l2, ln);
        let band = LambdaSet::Interval { lo: l2, hi: ln };
        group.bench_function(BenchmarkId::new("200x200", name), |b| {
            b.iter(|| certify::certify_grid(&plant, &d.k, &d.t, h, &band, &GridSpec::default()).unwrap())
        });
    }
    group.finish();
}

fn sim_step(c: &mut Criterion) {
    let plant = PlantModel::double_integrator();
    let d = designed(1.0, 5.0, 60.0);
    let mut group = c.benchmark_group("sim_step");
    for agents in [5, 100] {
        let (g, x) = network(agents, 5.0, 60.0, 1);
        group.bench_with_input(BenchmarkId::new("agentwise", agents), &agents, |b, _| {
            b.iter(|| sim::step(black_box(&x), &g, &d.k, 0.5, &plant).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("kronecker", agents), &agents, |b, _| {
            b.iter(|| sim::step_kronecker(black_box(&x), &g, &d.k, 0.5, &plant).unwrap())
        });
    }
    group.finish();
}

fn expm(c: &mut Criterion) {
    let a = Matrix::from_rows(&[[0.0, 1.0, 0.0, 0.0], [-2.0, -0.3, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0], [0.5, 0.0, -1.0, -0.2]])
        .unwrap();
    c.bench_function("expm_4x4", |b| b.iter(|| numerics::expm(black_box(&a), 0.7).unwrap()));
}

criterion_group!(benches, design, certify_grid, sim_step, expm);
criterion_main!(benches);
