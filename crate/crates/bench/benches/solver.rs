use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use tradeq_bench::*;
use tradeq_core::*;

fn bench_dual_sweep(c: &mut Criterion) {
    let p = bench_params();
    let chain = bench_chain();
    let mut group = c.benchmark_group("dual_sweep");
    for (nk, nb, nv) in [(20usize, 16usize, 16usize), (50, 40, 40)] {
        let grids = bench_grids(&p, &chain, nk, nb, nv);
        let seed = seed_table(&p, &chain, &grids);
        group.bench_function(format!("{nk}x{nb}x{nv}"), |b| {
            b.iter(|| dual_operator(black_box(&seed), &chain, &grids, &p).unwrap())
        });
    }
    group.finish();
}

fn bench_price_schedule(c: &mut Criterion) {
    let eq = bench_equilibrium();
    c.bench_function("price_schedule", |b| {
        b.iter(|| price_schedule(black_box(&eq.value), &eq.chain, &eq.grids, &eq.params).unwrap())
    });
}

fn bench_invert(c: &mut Criterion) {
    let eq = bench_equilibrium();
    c.bench_function("monotone_invert", |b| {
        b.iter(|| monotone_invert(black_box(&eq.bonds), &eq.grids).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let eq = bench_equilibrium();
    let start = SimStart::default();
    c.bench_function("simulate_200x100", |b| {
        b.iter_batched(
            || (),
            |_| simulate_paths(black_box(&eq), 200, 100, 7, &start).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_dual_sweep,
    bench_price_schedule,
    bench_invert,
    bench_simulate
);
criterion_main!(benches);
