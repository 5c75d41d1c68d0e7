use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pirank::autodiff::Graph;
use pirank::relaxsort::neuralsort;
use pirank::topk_dnc::{dnc_topk, make_plan};
use pirank::Tensor;
use pirank_bench::scores;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for len in [125usize, 1000] {
        let s = scores(len, 0);
        group.bench_with_input(BenchmarkId::new("neuralsort_top1", len), &s, |b, s| {
            b.iter(|| {
                let mut g = Graph::new();
                let v = g.param(Tensor::vector(s.clone()));
                black_box(neuralsort(&mut g, v, 1.0, 1).unwrap().rows)
            })
        });
        for depth in [2, 3] {
            let plan = make_plan(len, 1, depth, 1.0, None).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("dnc_top1_d{depth}"), len), &s, |b, s| {
                b.iter(|| {
                    let mut g = Graph::new();
                    let v = g.param(Tensor::vector(s.clone()));
                    black_box(dnc_topk(&mut g, v, &plan).unwrap().rows)
                })
            });
        }
    }
    group.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(20);
    let len = 1000;
    let s = scores(len, 1);
    for depth in [1, 3] {
        let plan = make_plan(len, 10, depth, 1.0, None).unwrap();
        group.bench_function(BenchmarkId::new("dnc_top10", format!("L{len}_d{depth}")), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let v = g.param(Tensor::vector(s.clone()));
                let rows = dnc_topk(&mut g, v, &plan).unwrap().rows;
                let total = g.sum(rows);
                black_box(g.backward(total).unwrap().wrt(v))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward, forward_backward);
criterion_main!(benches);
