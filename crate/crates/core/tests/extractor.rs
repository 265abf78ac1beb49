mod common;

use deepfa_core::extractor::mlp::{train, MlpModel, MlpTraining};
use deepfa_core::extractor::{extract_features, predict, train_extractor, TrainingSet};
use deepfa_core::{ExtractorModel, ExtractorSpec, FeatureMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn fit(x: &FeatureMatrix, y: &[usize], k: usize, spec: &ExtractorSpec) -> ExtractorModel {
    let set = TrainingSet {
        features: x,
        labels: y,
        supervised: None,
        num_classes: k,
    };
    train_extractor(&set, spec, None).unwrap()
}

fn accuracy(model: &ExtractorModel, x: &FeatureMatrix, y: &[usize]) -> f64 {
    let p = predict(model, x).unwrap();
    p.predicted_label.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn separable_blobs_fit_exactly() {
    let (x, y) = common::blobs(&[50, 50], 2, 6.0, 1);
    let m = fit(&x, &y, 2, &ExtractorSpec::default());
    assert_eq!(accuracy(&m, &x, &y), 1.0);
}

#[test]
fn held_out_blobs() {
    let (x, y) = common::blobs(&[60, 60, 60], 5, 6.0, 2);
    let (xt, yt) = common::blobs(&[100, 100, 100], 5, 6.0, 3);
    let m = fit(&x, &y, 3, &ExtractorSpec::default());
    let acc = accuracy(&m, &xt, &yt);
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn xor_is_learned() {
    let corners = [([0.0, 0.0], 0), ([1.0, 1.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..50 {
        for (c, l) in corners {
            rows.push([c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
            y.push(l);
        }
    }
    let x = FeatureMatrix::from_rows(&rows);
    let spec = ExtractorSpec {
        hidden_width: 8,
        ..ExtractorSpec::default()
    };
    let m = fit(&x, &y, 2, &spec);
    let acc = accuracy(&m, &x, &y);
    assert!(acc >= 0.95, "XOR training accuracy {acc}");
}

#[test]
fn training_is_deterministic() {
    let (x, y) = common::blobs(&[30, 30], 4, 3.0, 4);
    let spec = ExtractorSpec {
        seed: 17,
        ..ExtractorSpec::default()
    };
    let (ExtractorModel::Builtin(a), ExtractorModel::Builtin(b)) = (fit(&x, &y, 2, &spec), fit(&x, &y, 2, &spec)) else {
        panic!("builtin expected");
    };
    let bits = |m: &MlpModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = match fit(&x, &y, 2, &ExtractorSpec { seed: 18, ..spec }) {
        ExtractorModel::Builtin(m) => m,
        _ => unreachable!(),
    };
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn features_are_row_wise() {
    let (x, y) = common::blobs(&[20, 20], 3, 4.0, 5);
    let spec = ExtractorSpec {
        hidden_width: 16,
        epochs: 10,
        ..ExtractorSpec::default()
    };
    let m = fit(&x, &y, 2, &spec);
    let probe = x.select_rows(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 3]);
    let h = extract_features(&m, &probe).unwrap();
    assert_eq!((h.rows(), h.cols()), (10, 16));
    assert_eq!(h.row(3), h.row(9));
    let full = extract_features(&m, &x).unwrap();
    assert_eq!(h.row(5), full.row(5));
    let p = predict(&m, &x).unwrap();
    for row in p.probabilities.iter_rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn single_class_predicts_that_class() {
    let (x, _) = common::blobs(&[25], 3, 0.0, 6);
    let y = vec![0; 25];
    let m = fit(&x, &y, 1, &ExtractorSpec::default());
    let (xt, _) = common::blobs(&[10], 3, 0.0, 7);
    assert!(predict(&m, &xt).unwrap().predicted_label.iter().all(|&l| l == 0));
}

#[test]
fn dimension_mismatch_rejected() {
    let (x, y) = common::blobs(&[10, 10], 3, 4.0, 8);
    let m = fit(&x, &y, 2, &ExtractorSpec { epochs: 2, ..ExtractorSpec::default() });
    assert!(extract_features(&m, &FeatureMatrix::zeros(4, 5)).is_err());
    assert!(predict(&m, &FeatureMatrix::zeros(4, 2)).is_err());
}

#[test]
fn warm_start_continues_from_previous_weights() {
    let (x, y) = common::blobs(&[20, 20], 3, 4.0, 9);
    let cfg = MlpTraining {
        hidden: 8,
        epochs: 1,
        lr_initial: 1e-9,
        momentum: 0.0,
        batch_size: 64,
        seed: 1,
    };
    let first = train(&x, &y, 2, &cfg, None).unwrap();
    let other_seed = MlpTraining { seed: 2, ..cfg };
    let cold = train(&x, &y, 2, &other_seed, None).unwrap();
    let warm = train(&x, &y, 2, &other_seed, Some(&first)).unwrap();
    let dist = |a: &MlpModel, b: &MlpModel| {
        a.params().iter().zip(b.params()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    };
    assert!(dist(&first, &warm) < 1e-6);
    assert!(dist(&first, &cold) > 1e-3);
}
