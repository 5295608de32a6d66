use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rsop_bench::Fixture;
use rsop_core::adaptive::run_closed_loop;
use rsop_core::brute_force_optimize;
use rsop_core::scenario::AxisName;

fn analyzer(c: &mut Criterion) {
    let f = Fixture::bundled("table5-3x7");
    let params = f.scenario.sensing;
    c.bench_function("analyze 3x7", |b| b.iter(|| f.analyzer.analyze(black_box(params)).unwrap()));
    let wide = Fixture::bundled("fig7-ns5")
        .scenario
        .with_axis(AxisName::NPu, 100.0)
        .and_then(|s| s.analyzer())
        .unwrap();
    c.bench_function("analyze 5x100", |b| b.iter(|| wide.analyze(black_box(params)).unwrap()));
}

fn optimizer(c: &mut Criterion) {
    let f = Fixture::bundled("table5-3x7");
    let grid = f.grid(16);
    let mut g = c.benchmark_group("optimizer");
    g.sample_size(10);
    g.bench_function("grid 16x16 3x7", |b| {
        b.iter(|| brute_force_optimize(&f.analyzer, black_box(&grid), &f.scenario.qos).unwrap())
    });
    g.finish();
}

fn simulator(c: &mut Criterion) {
    let f = Fixture::bundled("table5-3x7");
    let mut g = c.benchmark_group("simulator");
    g.sample_size(10);
    g.bench_function("1000 slots 3x7", |b| {
        b.iter(|| f.simulator.run_replication(&f.schedules, 1000, black_box(1)).unwrap())
    });
    g.bench_function("closed loop 20 frames 3x7", |b| {
        b.iter(|| run_closed_loop(&f.simulator, &f.scenario.qos, &f.scenario.adaptive.config, 20, black_box(1)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, analyzer, optimizer, simulator);
criterion_main!(benches);
