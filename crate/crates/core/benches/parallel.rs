//! Sequential versus rayon execution for the three data-parallel loops:
//! forest construction, trial fan-out and Monte-Carlo volume estimation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellipsoid_cp::geometry::{self, CovarianceEstimate};
use ellipsoid_cp::harness::{self, ExperimentConfig};
use ellipsoid_cp::par::Execution;
use ellipsoid_cp::quantile::{fit_qrf_with, QrfConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn qrf_fit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scores: Vec<f64> = (0..4000).map(|_| -2.0 * rng.random::<f64>().ln()).collect();
    let cfg = QrfConfig::default();
    let mut group = c.benchmark_group("qrf_fit");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_qrf_with(&scores, 20, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn trial_fanout(c: &mut Criterion) {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "data": {"simulate": {"process": "var", "dim": 2, "order": 2, "n_train": 600, "n_test": 100}},
            "methods": ["multidim_spci", "coordwise_spci"],
            "trials": 4,
            "engine": {
                "quantile": {"engine": "qrf", "window": 10, "refit_stride": 10},
                "forecast": {"lags": {"lag_order": 2}}
            }
        }"#,
    )
    .unwrap();
    let mut group = c.benchmark_group("trial_fanout");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| harness::run_trials(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo_volume(c: &mut Criterion) {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
    let tc = geometry::truncate(&CovarianceEstimate::known(m).unwrap(), 1e-3).unwrap();
    let mut group = c.benchmark_group("monte_carlo_volume");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| geometry::monte_carlo_volume(&tc, 4.0, 1 << 20, 7, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, qrf_fit, trial_fanout, monte_carlo_volume);
criterion_main!(benches);
