//! Sequential vs. rayon execution of the penalty-grid sweep, plus the two
//! operator kernels that dominate each outer step.
//!
//! `cargo bench -p sbadmm-core` compares both paths in one binary; building
//! with `--no-default-features` turns the `Parallel` variant into the
//! sequential fallback.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use sbadmm_core::config::ExperimentConfig;
use sbadmm_core::experiments::{make_problem, reference_solution, run_grid, ReferenceMethod};
use sbadmm_core::inner::CirculantSolver;
use sbadmm_core::par::Execution;

fn config(size: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.set("size", &size.to_string()).unwrap();
    cfg.max_iterations = 30;
    cfg
}

fn grid_sweep(c: &mut Criterion) {
    let cfg = config(32);
    let problem = make_problem(&cfg).unwrap().problem;
    let reference = reference_solution(&problem, ReferenceMethod::LongRun).unwrap();
    let mut group = c.benchmark_group("grid_sweep_32x32_30it");
    group.sample_size(10);
    for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| b.iter(|| run_grid(&problem, &cfg, &reference, execution)));
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    for size in [64, 256] {
        let problem = make_problem(&config(size)).unwrap().problem;
        let y = problem.y().clone();
        group.bench_with_input(BenchmarkId::new("blur_forward", size), &y, |b, y| {
            b.iter(|| problem.blur().forward(black_box(y)).unwrap())
        });
        let solver = CirculantSolver::new(problem.lambda(), problem.omega(), 1.0, 0.0625).unwrap();
        group.bench_with_input(BenchmarkId::new("circulant_solve", size), &y, |b, y| {
            b.iter(|| solver.solve(black_box(y)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid_sweep, kernels);
criterion_main!(benches);
