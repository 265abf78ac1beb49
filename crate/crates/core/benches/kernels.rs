//! Hot kernels on a single-thread rayon pool ("sequential") and on the
//! default pool ("parallel"). Built with `--no-default-features` both rows
//! run the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deepfa_core::extractor::mlp::{train, MlpTraining};
use deepfa_core::opf::{per_class_costs, propagate_labels};
use deepfa_core::tsne::{calibrate_perplexity, kl_gradient, pairwise_sq_distances, symmetrize, tsne_embed};
use deepfa_core::{Embedding2D, FeatureMatrix, SeedSet, TsneParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn points(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMatrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn pools() -> [(&'static str, ThreadPool); 2] {
    let build = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    [("sequential", build(1)), ("parallel", build(0))]
}

fn distances(c: &mut Criterion) {
    let mut g = c.benchmark_group("pairwise_sq_distances");
    for n in [500, 1500] {
        let x = points(n, 64, 1);
        for (name, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(name, n), &x, |b, x| {
                b.iter(|| pool.install(|| pairwise_sq_distances(x)))
            });
        }
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("tsne_gradient");
    for n in [500, 1500] {
        let x = points(n, 32, 2);
        let cond = calibrate_perplexity(&pairwise_sq_distances(&x), &TsneParams::default()).unwrap();
        let p = symmetrize(&cond.matrix);
        let y = Embedding2D::new(points(n, 2, 3)).unwrap();
        for (name, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(name, n), &(), |b, _| {
                b.iter(|| pool.install(|| kl_gradient(&p, &y).unwrap()))
            });
        }
    }
    g.finish();
}

fn embed(c: &mut Criterion) {
    let mut g = c.benchmark_group("tsne_embed_300_steps");
    g.sample_size(10);
    let x = points(600, 32, 4);
    let params = TsneParams {
        iterations: 300,
        ..TsneParams::default()
    };
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| tsne_embed(&x, &params).unwrap())));
    }
    g.finish();
}

fn opf(c: &mut Criterion) {
    let mut g = c.benchmark_group("opf");
    let n = 3000;
    let x = points(n, 2, 5);
    let idx: Vec<usize> = (0..n).step_by(100).collect();
    let labels: Vec<usize> = (0..idx.len()).map(|i| i % 10).collect();
    let seeds = SeedSet::new(idx, labels, 10).unwrap();
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("per_class_costs", name), |b| {
            b.iter(|| pool.install(|| per_class_costs(&x, &seeds).unwrap()))
        });
        g.bench_function(BenchmarkId::new("propagate_labels", name), |b| {
            b.iter(|| pool.install(|| propagate_labels(&x, &seeds).unwrap()))
        });
    }
    g.finish();
}

fn mlp(c: &mut Criterion) {
    let mut g = c.benchmark_group("mlp_train_5_epochs");
    g.sample_size(10);
    let x = points(2000, 64, 6);
    let y: Vec<usize> = (0..2000).map(|i| i % 10).collect();
    let cfg = MlpTraining {
        hidden: 128,
        epochs: 5,
        lr_initial: 1e-3,
        momentum: 0.9,
        batch_size: 32,
        seed: 0,
    };
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| train(&x, &y, 10, &cfg, None).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, distances, gradient, embed, opf, mlp);
criterion_main!(benches);
