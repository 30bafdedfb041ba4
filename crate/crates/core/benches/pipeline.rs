use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rsp_core::executor::{execute_plan, hash_join, scan_pattern, ExecOptions, ScanCache};
use rsp_core::generator::{generate_stream, GeneratorParams, MixSchedule};
use rsp_core::optimizer::{OptimizerConfig, QueryPlanner};
use rsp_core::par::Parallelism;
use rsp_core::query::parse_continuous_query;
use rsp_core::rdf::{TimedTriple, Triple};

const Q9: &str = include_str!("../../../samples/q9.rq");
const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn window(rate: f64, sensors: usize) -> Vec<TimedTriple> {
    let schedule = MixSchedule::parse("segment 0 flow=0.3,temperature=0.3,chlorine=0.4\n").unwrap();
    let params = GeneratorParams {
        rate,
        windows: 1,
        window_ms: 10_000,
        slide_ms: 10_000,
        batch_ms: 5_000,
        sensors,
        seed: 1,
    };
    generate_stream(&schedule, &params)
}

fn bench_operators(c: &mut Criterion) {
    let spec = parse_continuous_query(Q9).unwrap();
    let patterns = &spec.algebra.branches[0].patterns;
    let stream = window(20_000.0, 5_000);
    let data: Vec<&Triple> = stream.iter().map(|t| &t.triple).collect();

    let mut g = c.benchmark_group("scan");
    g.throughput(Throughput::Elements(data.len() as u64));
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(scan_pattern(&data, &patterns[0], mode)))
        });
    }
    g.finish();

    let left = scan_pattern(&data, &patterns[0], Parallelism::Sequential);
    // ?s hasValue ?o1 joined with ?o1 numericValue ?v1
    let right = scan_pattern(&data, &patterns[4], Parallelism::Sequential);
    let mut g = c.benchmark_group("hash_join");
    g.throughput(Throughput::Elements((left.len() + right.len()) as u64));
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(hash_join(&left, &right, mode))));
    }
    g.finish();
}

fn bench_window(c: &mut Criterion) {
    let spec = parse_continuous_query(Q9).unwrap();
    let planner = QueryPlanner::new(&spec.algebra, OptimizerConfig::default()).unwrap();
    let stream = window(6_000.0, 2_000);
    let data: Vec<&Triple> = stream.iter().map(|t| &t.triple).collect();
    let (_, stats) = planner.collect_stats(0, &data, &mut ScanCache::new(), Parallelism::Sequential);
    let (plan, _) = planner.plan_from_stats(&stats).unwrap();

    let mut g = c.benchmark_group("window");
    g.throughput(Throughput::Elements(data.len() as u64));
    for (name, mode) in MODES {
        let opts = ExecOptions { counting: false, parallelism: mode, cancel: None };
        g.bench_function(BenchmarkId::new("execute", name), |b| {
            b.iter(|| black_box(execute_plan(&plan, &data, &mut ScanCache::new(), &opts).unwrap()))
        });
        g.bench_function(BenchmarkId::new("collect_stats", name), |b| {
            b.iter(|| black_box(planner.collect_stats(0, &data, &mut ScanCache::new(), mode)))
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_operators, bench_window
}
criterion_main!(benches);
