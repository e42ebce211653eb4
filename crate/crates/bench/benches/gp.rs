use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use simreal_bench::bowl_observations;
use simreal_core::acquisition::{make_grid, score_candidates, AcquisitionConfig};
use simreal_core::gp::{optimize_hyperparameters, GpModel, HyperBounds, HyperFitOptions, NoiseConfig};
use simreal_core::kernels::kernel_matrix;
use simreal_core::optimizer::Budget;
use simreal_core::sampling::BoxBounds;
use simreal_core::{CompositeKernelConfig, Fidelity};

fn kernel_and_fit(c: &mut Criterion) {
    let kernel = CompositeKernelConfig::default_for_dim(2);
    let noise = NoiseConfig::default();
    let mut group = c.benchmark_group("gp");
    for n in [20, 80, 160] {
        let obs = bowl_observations(n);
        let points: Vec<_> = obs.iter().map(|o| o.a.clone()).collect();
        group.bench_with_input(BenchmarkId::new("kernel_matrix", n), &points, |b, p| {
            b.iter(|| kernel_matrix(black_box(p), &kernel).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fit", n), &obs, |b, o| {
            b.iter(|| GpModel::fit(black_box(o), &kernel, &noise).unwrap())
        });
    }
    let obs = bowl_observations(80);
    let opts = HyperFitOptions::default();
    group.sample_size(10);
    group.bench_function("hyperparameters_80", |b| {
        b.iter(|| optimize_hyperparameters(black_box(&obs), &HyperBounds::default(), &noise, &opts, 3).unwrap())
    });
    group.finish();
}

fn acquisition(c: &mut Criterion) {
    let kernel = CompositeKernelConfig::default_for_dim(2);
    let noise = NoiseConfig::default();
    let model = GpModel::fit(&bowl_observations(60), &kernel, &noise).unwrap();
    let cfg = AcquisitionConfig::default();
    let grid = make_grid(&BoxBounds::unit(2), cfg.grid_size, Fidelity::Real).unwrap();
    let budget = Budget::new(15, 161);
    let mut group = c.benchmark_group("acquisition");
    group.sample_size(10);
    group.bench_function("score_candidates_200", |b| {
        b.iter(|| score_candidates(&model, black_box(&grid), &budget, &cfg, 11).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernel_and_fit, acquisition);
criterion_main!(benches);
