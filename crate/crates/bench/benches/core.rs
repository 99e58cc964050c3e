use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use markermap_bench::{planted, random_matrix, step_fixture};
use markermap_core::eval::knn_on_markers;
use markermap_core::model::Method;
use markermap_core::nn::Mode;
use markermap_core::selector::sample_gumbel_softmax;
use markermap_core::{Graph, Rng};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64, 256] {
        let a = random_matrix(n, n, 1);
        let b = random_matrix(n, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(a.matmul(&b).unwrap()))
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for method in [Method::Supervised, Method::Unsupervised, Method::Joint] {
        let f = step_fixture(method, 64, 100);
        let y = f.model.uses_classification().then_some(f.y.as_slice());
        group.bench_function(method.name(), |bench| {
            bench.iter(|| {
                let mut g = Graph::new();
                let bound = f.model.bind(&mut g);
                let x = g.constant(f.x.clone());
                let fwd = f
                    .model
                    .forward(&mut g, &bound, x, y, &f.noise, 1.0, Mode::Train)
                    .unwrap();
                g.backward(fwd.loss).unwrap();
                black_box(g.grad(bound.selector[0]))
            })
        });
    }
    group.finish();
}

fn gumbel_sampling(c: &mut Criterion) {
    let logits: Vec<f64> = (0..1000).map(|j| (j as f64 * 0.37).sin()).collect();
    let mut rng = Rng::new(3);
    c.bench_function("gumbel_softmax k=50 d=1000", |bench| {
        bench.iter(|| black_box(sample_gumbel_softmax(&logits, 50, 0.5, &mut rng).unwrap()))
    });
}

fn knn(c: &mut Criterion) {
    let (x, y) = planted(1000, 100);
    let train: Vec<usize> = (0..800).collect();
    let test: Vec<usize> = (800..1000).collect();
    let (xt, xs) = (x.select_rows(&train), x.select_rows(&test));
    let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let markers: Vec<usize> = (0..10).collect();
    c.bench_function("knn 800x200 on 10 markers", |bench| {
        bench.iter(|| black_box(knn_on_markers(&xt, &yt, &xs, &markers, 5).unwrap()))
    });
}

criterion_group!(benches, matmul, training_step, gumbel_sampling, knn);
criterion_main!(benches);
