use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use nocsim::check::{check_instance, Instance};
use nocsim::experiment::{figure_config, simulate, Figure};
use nocsim::kernel::mix_seed;
use nocsim::par;

fn ordering_instances(c: &mut Criterion) {
    let instances: Vec<Instance> = (0..64).map(|i| Instance::random(mix_seed(5, i))).collect();
    let mut g = c.benchmark_group("check_64_instances");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(par::map(&instances, check_instance))));
    g.bench_function("sequential", |b| b.iter(|| black_box(par::map_sequential(&instances, check_instance))));
    g.finish();
}

fn latency_sweep(c: &mut Criterion) {
    let cfg = figure_config(Figure::Latency);
    let levels = cfg.traffic.interference_levels.clone();
    let point = |&level: &u32| simulate(&cfg, &cfg.traffic_at(level), false).unwrap().report.narrow_read.mean;
    let mut g = c.benchmark_group("fig5a_levels");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| black_box(par::map(&levels, point))));
    g.bench_function("sequential", |b| b.iter(|| black_box(par::map_sequential(&levels, point))));
    g.finish();
}

criterion_group!(benches, ordering_instances, latency_sweep);
criterion_main!(benches);
