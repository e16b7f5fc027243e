use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use flowcredit::flow::{certify_dummy_edges, shapley_flow_exact, shapley_flow_mc, DEFAULT_CONFIG_CAP};
use flowcredit::synth::{
    gen_random_expression_graph, gen_random_linear_graph, make_chain, make_diamond, make_or, RandomGraphConfig,
};

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    let fixtures = [
        ("or", make_or()),
        ("diamond", make_diamond()),
        ("chain4", make_chain(4, -1.82).unwrap()),
        ("chain8", make_chain(8, -1.82).unwrap()),
    ];
    for (name, (g, bg, fg)) in &fixtures {
        group.bench_function(*name, |b| b.iter(|| shapley_flow_exact(black_box(g), bg, fg, DEFAULT_CONFIG_CAP)));
    }
    for n in [5, 6, 7] {
        let (g, mut s) = gen_random_expression_graph(&RandomGraphConfig { n, p: 0.5, seed: 3 }, 0.2).unwrap();
        let (bg, fg) = (s.sample(), s.sample());
        group.bench_with_input(BenchmarkId::new("random-expression", n), &n, |b, _| {
            b.iter(|| shapley_flow_exact(black_box(&g), &bg, &fg, DEFAULT_CONFIG_CAP))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte-carlo");
    let (g, mut s) = gen_random_linear_graph(&RandomGraphConfig { n: 10, p: 0.5, seed: 1 }).unwrap();
    let (bg, fg) = (s.sample(), s.sample());
    for samples in [100, 1_000, 10_000] {
        group.bench_with_input(BenchmarkId::new("linear-n10", samples), &samples, |b, &n| {
            b.iter(|| shapley_flow_mc(black_box(&g), &bg, &fg, n, 7))
        });
    }
    let (g, bg, fg) = make_diamond();
    group.bench_function("diamond-10000", |b| b.iter(|| shapley_flow_mc(black_box(&g), &bg, &fg, 10_000, 7)));
    group.finish();
}

fn dummy_scan(c: &mut Criterion) {
    let (g, bg, fg) = make_chain(5, -1.82).unwrap();
    c.bench_function("dummy-scan/chain5", |b| b.iter(|| certify_dummy_edges(black_box(&g), &bg, &fg, 1e4, 0.0)));
}

criterion_group!(benches, exact, monte_carlo, dummy_scan);
criterion_main!(benches);
