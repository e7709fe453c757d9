use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iccd_core::selection::{select_bm25, Bm25Params, DemoOrder};
use iccd_core::{contrastive_combine, render_prompt, ScoreVector, SeededRng, Selector};

fn combine(c: &mut Criterion) {
    let mut group = c.benchmark_group("contrastive_combine");
    for n in [2usize, 5, 16] {
        let pos = ScoreVector::new((0..n).map(|i| -(i as f64) * 0.3).collect()).unwrap();
        let neg = ScoreVector::new((0..n).map(|i| (i as f64) * 0.1 - 1.0).collect()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| contrastive_combine(black_box(&pos), black_box(&neg), 1.0).unwrap())
        });
    }
    group.finish();
}

fn bm25(c: &mut Criterion) {
    let data = iccd_bench::dataset();
    let query = &data.test[0];
    c.bench_function("select_bm25/pool400/k16", |b| {
        b.iter(|| select_bm25(&data.pool, black_box(query), 16, Bm25Params::default(), DemoOrder::Ascending).unwrap())
    });
}

fn render(c: &mut Criterion) {
    let data = iccd_bench::dataset();
    let mut rng = SeededRng::new(0);
    let demos = Selector::random().select(&data.pool, &data.test[0], 16, &mut rng).unwrap();
    c.bench_function("render_prompt/16shot", |b| {
        b.iter(|| render_prompt(&data.task.template, black_box(&demos), &data.test[0]).unwrap())
    });
}

fn evaluate(c: &mut Criterion) {
    let exp = iccd_bench::experiment(50);
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    group.bench_function("oracle/50queries/16shot", |b| b.iter(|| exp.evaluate().unwrap()));
    group.finish();
}

criterion_group!(benches, combine, bm25, render, evaluate);
criterion_main!(benches);
