use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use recann::io::{IoBackend, LatencyModel};
use recann::pool::PoolConfig;
use recann::{Engine, SchedulerConfig, SearchKind, SearchParams};
use recann_bench::Fixture;

fn sim(us: u64) -> IoBackend {
    IoBackend::Sim {
        latency: LatencyModel::Fixed(Duration::from_micros(us)),
        queue_depth: 64,
    }
}

fn ladder(c: &mut Criterion) {
    let f = Fixture::clustered(5000, 32, 50);
    let capacity = PoolConfig::capacity_for_ratio(f.index.len(), 0.1);
    let base = SearchParams::new(64, 10);
    let tuned = SearchParams {
        beam_width: 4,
        prefetch_depth: 4,
        ..base
    };
    let rungs = [
        ("baseline", SearchKind::BestFirst, 0, base, 1),
        ("+async", SearchKind::BestFirst, 0, base, 2),
        ("+record", SearchKind::BestFirst, capacity, base, 2),
        ("+cbs", SearchKind::CacheAware, capacity, tuned, 2),
    ];
    let mut g = c.benchmark_group("search/sim-20us");
    g.sample_size(10);
    g.measurement_time(Duration::from_secs(5));
    for (label, kind, capacity, params, batch_size) in rungs {
        let sched = SchedulerConfig {
            batch_size,
            ..SchedulerConfig::default()
        };
        g.bench_function(label, |b| {
            b.iter(|| {
                let engine = Engine::new(Arc::clone(&f.index), capacity, sim(20)).unwrap();
                engine.run(&f.queries, kind, &params, &sched).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, ladder);
criterion_main!(benches);
