use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use heatctl_bench::setup;
use heatctl_core::control::{solve_control, Source};
use heatctl_core::driver::Solver;
use heatctl_core::forward::{solve_forward, ForwardConfig, ForwardProblem};

fn control_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("control_solve");
    group.sample_size(10);
    for n in [16, 32] {
        let (_, disc, _) = setup(10.0, n);
        let u0 = |x: f64| 10.0 * (PI * x).sin();
        let a = vec![0.0; disc.quad.len()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_control(&disc, black_box(&a), Source::Initial(&u0)).unwrap())
        });
    }
    group.finish();
}

fn line_search(c: &mut Criterion) {
    let (_, disc, g) = setup(10.0, 16);
    let solver = Solver::new(&disc, &g);
    let u0 = |x: f64| 10.0 * (PI * x).sin();
    let state = solver.init_state(&u0).unwrap();
    let upd = solver.direction(&state).unwrap();
    let mut group = c.benchmark_group("line_search");
    group.sample_size(10);
    group.bench_function("e_of_lambda_16", |b| b.iter(|| solver.e_of_lambda(&state, &upd, black_box(0.5))));
    group.bench_function("scan_16", |b| b.iter(|| solver.line_search(&state, &upd, 1.0)));
    group.finish();
}

fn forward(c: &mut Criterion) {
    let (cfg, _, g) = setup(10.0, 16);
    let u0 = |x: f64| 10.0 * (PI * x).sin();
    let zero = |_: f64, _: f64| 0.0;
    let p = ForwardProblem {
        nu: cfg.nu,
        horizon: cfg.horizon,
        omega: cfg.omega(),
        g: &g,
        u0: &u0,
        control: &zero,
    };
    let fc = ForwardConfig {
        nx: 257,
        nt: 512,
        ..ForwardConfig::default()
    };
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    group.bench_function("crank_nicolson_257x512", |b| b.iter(|| solve_forward(&p, &fc).unwrap()));
    group.finish();
}

criterion_group!(benches, control_solve, line_search, forward);
criterion_main!(benches);
