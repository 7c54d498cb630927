use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polyagg::instances::{self, ListMode, WarehouseParams};
use polyagg::volume::{affine_hull, sample_with, Execution, WalkParams};
use polyagg::{build_polytope, Momdp};

fn bench_walk(c: &mut Criterion, name: &str, m: &Momdp, count: usize) {
    let poly = build_polytope(m).unwrap();
    let chart = affine_hull(&poly).unwrap();
    let params = WalkParams::for_dim(chart.dim(), count);
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(label, count), &exec, |b, &exec| {
            b.iter(|| black_box(sample_with(&poly, &chart, params, 1, exec).unwrap()))
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    bench_walk(c, "simplex-4", &instances::gen_simplex_instance(4).unwrap(), 20_000);
    let params = WarehouseParams::sample(2, 3, ListMode::RandomSubset, 1).unwrap();
    bench_walk(c, "warehouse-2x3", &instances::gen_warehouse(&params).unwrap(), 5_000);
}

criterion_group!(benches, sampling);
criterion_main!(benches);
