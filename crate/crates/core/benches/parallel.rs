//! Compares the sweep's data-parallel unit evaluation against a
//! single-thread run of the same workload.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use fairsample::harness::{run_experiment_on, ExperimentConfig, Variant};
use fairsample::synth;

fn bench_config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        variants: vec![Variant::AlphaBeta, Variant::QpTree],
        alpha_grid: vec![0.0, 0.2, 0.4],
        eta_grid: vec![0.0, 0.5, 1.0],
        seeds: 2,
        subsample: Some(600),
        t_cap: 20,
        min_leaf_mass: 20.0,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

fn sweep_benchmark(c: &mut Criterion) {
    let ds = synth::correlated_groups(900, 3, 0.7, 17);
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path());

    let mut group = c.benchmark_group("sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(20));

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("one-thread", |b| {
            b.iter(|| single.install(|| run_experiment_on(&cfg, &ds).unwrap()))
        });
        group.bench_function("thread-pool", |b| {
            b.iter(|| run_experiment_on(&cfg, &ds).unwrap())
        });
    }

    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| {
        b.iter(|| run_experiment_on(&cfg, &ds).unwrap())
    });

    group.finish();
}

criterion_group!(benches, sweep_benchmark);
criterion_main!(benches);
