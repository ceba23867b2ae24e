use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use covergllvm::estimator::{fit, FitData, FitOptions};
use covergllvm::exec::Execution;
use covergllvm::model::{CovariateMatrix, LatentUnits, ResponseMatrix};
use covergllvm::ordination::{dissimilarity, nmds, Metric, NmdsOptions};
use covergllvm::simulation::{replicate_rng, simulate_replicate, Generator, SimDesign};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset() -> (SimDesign, ResponseMatrix) {
    let design = SimDesign { calibration_cells: 50_000, ..SimDesign::desk(Generator::HurdleBeta, 0.5) };
    let (_, _, cover) = simulate_replicate(&design, &mut replicate_rng(1, 0, 0)).unwrap();
    (design, cover)
}

fn bench_fit(c: &mut Criterion) {
    let (design, cover) = dataset();
    let covariates = CovariateMatrix::empty(design.n);
    let units = LatentUnits::identity(cover.site_names());
    let spec = design.spec();
    let mut group = c.benchmark_group("fit_hurdle_60x40");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = FitOptions { n_restarts: 4, max_iterations: 100, execution, ..FitOptions::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let data = FitData { responses: &cover, covariates: &covariates, units: &units };
                black_box(fit(data, &spec, &opts).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_nmds(c: &mut Criterion) {
    let (_, cover) = dataset();
    let diss = dissimilarity(&cover, Metric::BrayCurtis, Execution::Sequential).unwrap();
    let mut group = c.benchmark_group("nmds_10_restarts");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = NmdsOptions { n_restarts: 10, execution, ..NmdsOptions::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(nmds(&diss, cover.site_names(), &opts).unwrap()))
        });
    }
    group.finish();
}

fn bench_dissimilarity(c: &mut Criterion) {
    let (_, cover) = dataset();
    let mut group = c.benchmark_group("bray_curtis");
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(dissimilarity(&cover, Metric::BrayCurtis, execution).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_nmds, bench_dissimilarity);
criterion_main!(benches);
