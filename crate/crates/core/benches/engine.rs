//! Benchmarks for the two hot paths: per-event coarse-phase ingestion and
//! the analysis-cycle grouping, the latter compared between the rayon
//! data-parallel path (`group`, default `parallel` feature) and the
//! always-sequential fallback (`group_sequential`).
//!
//! Run with `cargo bench -p tigris`.

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tigris::analysis::{group, group_sequential, CriterionBinding, DEFAULT_SIGMA_K};
use tigris::config::MonitoringConfig;
use tigris::dsl::Criterion as RelevanceCriterion;
use tigris::engine::Engine;
use tigris::metrics::{EventRecord, MetricKind, MetricSnapshot, StatsRegistry};

fn bindings() -> Vec<CriterionBinding> {
    vec![
        CriterionBinding::new(
            RelevanceCriterion::Frequency,
            MetricKind::InvocationFrequency,
        ),
        CriterionBinding::new(RelevanceCriterion::Expensiveness, MetricKind::ExecutionTime),
        CriterionBinding::new(
            RelevanceCriterion::Changeability,
            MetricKind::ComputationPattern,
        ),
        CriterionBinding::new(
            RelevanceCriterion::Concurrency,
            MetricKind::ConcurrencyLevel,
        ),
    ]
}

fn synthetic_snapshot(event_types: usize, seed: u64) -> MetricSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = BTreeMap::new();
    for t in 0..event_types {
        let mut per = BTreeMap::new();
        per.insert(
            MetricKind::InvocationFrequency,
            rng.random_range(1.0..1e6f64),
        );
        per.insert(MetricKind::ExecutionTime, rng.random_range(1e3..1e8f64));
        per.insert(
            MetricKind::ComputationPattern,
            rng.random_range(0.0..1e4f64),
        );
        per.insert(MetricKind::ConcurrencyLevel, rng.random_range(1.0..64.0));
        values.insert(format!("svc.Type{t:06}.run()"), per);
    }
    MetricSnapshot {
        taken_at_ns: 0,
        values,
    }
}

fn bench_ingestion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let types: Vec<String> = (0..200).map(|t| format!("svc.Type{t}.run()")).collect();
    let events: Vec<EventRecord> = (0..10_000u64)
        .map(|i| {
            let mut ev = EventRecord::new(
                types[rng.random_range(0..types.len())].clone(),
                i * 1_000,
                rng.random_range(1_000..1_000_000),
            );
            ev.return_size_bytes = rng.random_range(0..65536);
            ev.active_threads = rng.random_range(1..32);
            ev
        })
        .collect();

    let mut group = c.benchmark_group("ingestion");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.bench_function("record_event_10k", |b| {
        b.iter_batched(
            StatsRegistry::with_all_metrics,
            |registry| {
                for ev in &events {
                    registry.record(black_box(ev)).unwrap();
                }
                registry
            },
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_grouping(c: &mut Criterion) {
    let bindings = bindings();
    let mut bench = c.benchmark_group("grouping");
    for &n in &[1_000usize, 10_000, 50_000] {
        let snapshot = synthetic_snapshot(n, 99);
        bench.throughput(Throughput::Elements(n as u64));
        bench.bench_with_input(BenchmarkId::new("parallel", n), &snapshot, |b, s| {
            b.iter(|| group(black_box(s), &bindings, DEFAULT_SIGMA_K).unwrap())
        });
        bench.bench_with_input(BenchmarkId::new("sequential", n), &snapshot, |b, s| {
            b.iter(|| group_sequential(black_box(s), &bindings, DEFAULT_SIGMA_K).unwrap())
        });
    }
    bench.finish();
}

fn bench_full_cycle(c: &mut Criterion) {
    let config = MonitoringConfig::new(
        "(more frequent U most expensive) & least changeable",
        bindings(),
        0.5,
        120,
    )
    .unwrap();
    let engine = Engine::new(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 0..10_000 {
        let id = format!("svc.Type{t:05}.run()");
        for i in 0..3u64 {
            let mut ev = EventRecord::new(
                id.clone(),
                t as u64 * 10 + i,
                rng.random_range(1_000..1_000_000),
            );
            ev.return_size_bytes = rng.random_range(0..65536);
            ev.active_threads = rng.random_range(1..32);
            engine.on_event(&ev).unwrap();
        }
    }
    c.bench_function("run_cycle/10k_types", |b| {
        b.iter(|| engine.run_cycle().unwrap())
    });
}

criterion_group!(benches, bench_ingestion, bench_grouping, bench_full_cycle);
criterion_main!(benches);
