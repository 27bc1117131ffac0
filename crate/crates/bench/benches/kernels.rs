use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lowdeg_bench::{oracle, rescaled, spread_prefix, square_gaussian};
use lowdeg_core::marginal::{qbar_raw, sample};
use lowdeg_core::permanent::permanent_ryser;
use lowdeg_core::RngStream;

fn permanents(c: &mut Criterion) {
    let mut g = c.benchmark_group("ryser");
    for n in [6, 10, 14] {
        let a = square_gaussian(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| b.iter(|| permanent_ryser(black_box(a))));
    }
    g.finish();
}

fn marginals(c: &mut Criterion) {
    let mut g = c.benchmark_group("marginal_full_prefix");
    for l in [1, 2] {
        for n in [6, 9, 12] {
            let z = rescaled(n, 2);
            let prefix = spread_prefix(n);
            g.bench_with_input(BenchmarkId::new(format!("l{l}"), n), &prefix, |b, p| {
                b.iter(|| qbar_raw(&z, black_box(p), 0.5, l))
            });
        }
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample");
    for n in [4, 6] {
        let o = oracle(n, 1, 0.5, 3);
        let mut rng = RngStream::new(4).rng();
        g.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| sample(&o, &mut rng)));
    }
    g.finish();
}

criterion_group!(benches, permanents, marginals, sampler);
criterion_main!(benches);
