#![allow(dead_code)]

use deepfa_core::{Dataset, FeatureMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian blobs with unit variance. Class `k` is centered at
/// `sep / sqrt(2) * e_k`, so every pair of centers is `sep` apart.
pub fn blobs(per_class: &[usize], d: usize, sep: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    assert!(per_class.len() <= d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let offset = sep / std::f64::consts::SQRT_2;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (k, &count) in per_class.iter().enumerate() {
        for _ in 0..count {
            for j in 0..d {
                let c = if j == k { offset } else { 0.0 };
                data.push(c + normal.sample(&mut rng));
            }
            labels.push(k);
        }
    }
    let n = labels.len();
    (FeatureMatrix::from_vec(n, d, data).unwrap(), labels)
}

pub fn blob_dataset(per_class: &[usize], d: usize, sep: f64, seed: u64) -> Dataset {
    let (x, y) = blobs(per_class, d, sep, seed);
    let names = (0..per_class.len()).map(|k| k.to_string()).collect();
    Dataset::from_matrix(&x, &y, names).unwrap()
}

pub fn uniform_points(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMatrix::from_vec(n, d, data).unwrap()
}

/// Dataset with near-equal class sizes and zero features; enough for split arithmetic.
pub fn sized_dataset(n: usize, classes: usize) -> Dataset {
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let names = (0..classes).map(|k| format!("c{k}")).collect();
    Dataset::from_matrix(&FeatureMatrix::zeros(n, 1), &labels, names).unwrap()
}
