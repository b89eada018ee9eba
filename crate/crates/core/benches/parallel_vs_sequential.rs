//! Rayon versus sequential execution on the three hot loops: replicated
//! coverage, Monte Carlo radius draws and the pointwise GP fits.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gpcover::credible;
use gpcover::exec;
use gpcover::harness::{self, ExperimentPlan};

fn plan(v: serde_json::Value) -> ExperimentPlan {
    serde_json::from_value(v).unwrap()
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn gwn_coverage(c: &mut Criterion) {
    let p = plan(serde_json::json!({
        "model": "gwn",
        "truth": {"kind": "selfsimilar", "beta": 1.0, "c": 1.0},
        "n": [1e4],
        "methods": ["EB-L1", "EB-Llogn"],
        "replications": 16,
        "draws": 500,
    }));
    let mut g = c.benchmark_group("gwn_coverage");
    g.sample_size(10);
    for (label, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            exec::set_parallel(on);
            b.iter(|| black_box(harness::run_plan(&p).unwrap()));
        });
    }
    exec::set_parallel(true);
    g.finish();
}

fn radius_draws(c: &mut Criterion) {
    let mut g = c.benchmark_group("radius_draws");
    g.sample_size(10);
    for (label, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            exec::set_parallel(on);
            b.iter(|| black_box(credible::radius_fixed_a(20.0, 1e5, 0.05, 4000, 7).unwrap()));
        });
    }
    exec::set_parallel(true);
    g.finish();
}

fn regression_replications(c: &mut Criterion) {
    let p = plan(serde_json::json!({
        "model": "regression",
        "truth": {"kind": "f2"},
        "n": [200.0],
        "methods": ["M1", "M2", "M3"],
        "replications": 8,
    }));
    let mut g = c.benchmark_group("regression_replications");
    g.sample_size(10);
    for (label, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            exec::set_parallel(on);
            b.iter(|| black_box(harness::run_plan(&p).unwrap()));
        });
    }
    exec::set_parallel(true);
    g.finish();
}

criterion_group!(benches, gwn_coverage, radius_draws, regression_replications);
criterion_main!(benches);
