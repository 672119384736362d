use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use assumption_lab::engine::{Engine, EngineConfig};
use assumption_lab::parallel::Execution;
use assumption_lab::scenarios::Scenario;

fn config(execution: Execution, replications: usize) -> EngineConfig {
    EngineConfig {
        horizon: 500,
        replications,
        execution,
        record_rows: false,
        track_theta_bar: Some(false),
        ..EngineConfig::default()
    }
}

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for name in ["contaminated-gaussian", "contaminated-binary"] {
        let sc = Scenario::by_name(name).unwrap();
        let omega = sc.spec().default_omega_star();
        for (label, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, name), &execution, |b, &execution| {
                let engine = Engine::new(&sc, &omega, config(execution, 64)).unwrap();
                b.iter(|| engine.run().unwrap());
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
