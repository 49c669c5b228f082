use criterion::{criterion_group, criterion_main, Criterion};
use mlgd_bench::{run_experiment_sequential, ExperimentPlan};
use mlgd_core::mlgd::MlgdConfig;
use mlgd_core::{Algorithm, ScenarioConfig};

fn small_plan(workers: usize) -> ExperimentPlan {
    ExperimentPlan {
        scenario: ScenarioConfig::new(8, 2, 2, 2, 10.0).with_seed(1),
        snr_list: vec![10.0, 30.0],
        n_realizations: 4,
        n_restarts: 2,
        algorithms: vec![Algorithm::Wmmse, Algorithm::Mlgd],
        mlgd: MlgdConfig {
            total_iters: 50,
            ..MlgdConfig::default()
        },
        wmmse_max_iters: 50,
        workers,
        ..ExperimentPlan::default()
    }
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);

    group.bench_function("sequential", |b| {
        let plan = small_plan(1);
        b.iter(|| run_experiment_sequential(&plan).unwrap());
    });

    #[cfg(feature = "parallel")]
    for workers in [2, 4, 8] {
        group.bench_with_input(criterion::BenchmarkId::new("parallel", workers), &workers, |b, &w| {
            let plan = small_plan(w);
            b.iter(|| mlgd_bench::run_experiment_parallel(&plan).unwrap());
        });
    }

    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
