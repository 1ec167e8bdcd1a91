//! The same workloads on the global rayon pool and on a one-thread pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use keyrate::kfactory::{LambdaVector, Pinching};
use keyrate::opalg::RuleSet;
use keyrate::oracle::inequality_suite;
use keyrate::par;
use keyrate::pipeline::BoundEngine;
use keyrate::scenarios::{constraints_from_behavior, werner_chsh, ConstraintMode};
use keyrate::sdp::SolverOptions;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("inequality_suite");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, 32), |b| b.iter(|| pool.install(|| inequality_suite(32, 7, 8).unwrap())));
    }
    g.finish();
}

fn lambda_batch(c: &mut Criterion) {
    let (_, behavior) = werner_chsh(0.03).unwrap();
    let cs = constraints_from_behavior(&behavior, ConstraintMode::Full).unwrap();
    let rules = RuleSet::new(cs.card, true);
    let engine = BoundEngine::new(&cs, &rules, Pinching::OneParty { alice_key: 0 }, None, SolverOptions::default()).unwrap();
    let points: Vec<LambdaVector> = (0..8).map(|i| LambdaVector(vec![0.1 * i as f64; cs.len()])).collect();
    let mut g = c.benchmark_group("bound_batch");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, points.len()), |b| {
            b.iter(|| pool.install(|| par::map(&points, |l| engine.entropy_bound(l).map(|r| r.nats).ok())))
        });
    }
    g.finish();
}

criterion_group!(benches, suite, lambda_batch);
criterion_main!(benches);
