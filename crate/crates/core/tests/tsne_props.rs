use deepfa_core::tsne::{
    calibrate_perplexity, kl_divergence, kl_gradient, pairwise_sq_distances, symmetrize, tsne_embed,
    tsne_embed_traced, AffinityMatrix,
};
use deepfa_core::{Embedding2D, FeatureMatrix, TsneParams};
use proptest::prelude::*;

fn matrix(n: usize, d: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = FeatureMatrix> {
    prop::collection::vec(range, n * d).prop_map(move |v| FeatureMatrix::from_vec(n, d, v).unwrap())
}

/// Distinct points on a 1/8 grid: coordinates, shifts and their differences are exact.
fn dyadic(n: usize, d: usize) -> impl Strategy<Value = FeatureMatrix> {
    prop::collection::vec(-64i32..64, n * d)
        .prop_map(move |v| FeatureMatrix::from_vec(n, d, v.into_iter().map(|c| c as f64 / 8.0).collect()).unwrap())
        .prop_filter("distinct rows", |m| {
            (0..m.rows()).all(|i| (0..i).all(|j| m.row(i) != m.row(j)))
        })
}

fn affinities(x: &FeatureMatrix, perplexity: f64) -> AffinityMatrix {
    let params = TsneParams {
        perplexity,
        ..TsneParams::default()
    };
    symmetrize(&calibrate_perplexity(&pairwise_sq_distances(x), &params).unwrap().matrix)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(
        (x, y) in (3usize..=8).prop_flat_map(|n| (matrix(n, 4, -2.0..2.0), matrix(n, 2, -1.0..1.0)))
    ) {
        let n = x.rows();
        let p = affinities(&x, (n - 1) as f64 / 2.0);
        let g = kl_gradient(&p, &Embedding2D::new(y.clone()).unwrap()).unwrap();
        let h = 1e-6;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..2 * n {
            let mut a = y.clone();
            a.as_mut_slice()[k] += h;
            let mut b = y.clone();
            b.as_mut_slice()[k] -= h;
            let fd = (kl_divergence(&p, &Embedding2D::new(a).unwrap()).unwrap()
                - kl_divergence(&p, &Embedding2D::new(b).unwrap()).unwrap())
                / (2.0 * h);
            num += (g.as_slice()[k] - fd).powi(2);
            den += fd * fd;
        }
        prop_assume!(den > 1e-12);
        prop_assert!((num / den).sqrt() < 1e-4, "relative error {}", (num / den).sqrt());
        for c in 0..2 {
            let s: f64 = (0..n).map(|i| g.get(i, c)).sum();
            prop_assert!(s.abs() <= 1e-10);
        }
    }

    #[test]
    fn calibration_hits_target(x in matrix(40, 3, -5.0..5.0), perplexity in 2.0f64..12.0) {
        let params = TsneParams { perplexity, ..TsneParams::default() };
        let c = calibrate_perplexity(&pairwise_sq_distances(&x), &params).unwrap();
        for i in 0..x.rows() {
            if c.unconverged.contains(&i) {
                continue;
            }
            let row = c.matrix.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(row[i], 0.0);
            let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            prop_assert!((h.exp() - perplexity).abs() <= 1e-4, "row {}: {}", i, h.exp());
        }
        // symmetrize validates every invariant through AffinityMatrix::new
        let p = symmetrize(&c.matrix);
        prop_assert!(AffinityMatrix::new(p.matrix().clone()).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn embedding_ignores_translation(x in dyadic(12, 3), shift in prop::collection::vec(-32i32..32, 3), seed in any::<u64>()) {
        let moved = FeatureMatrix::from_vec(
            x.rows(),
            3,
            x.as_slice().iter().enumerate().map(|(k, v)| v + shift[k % 3] as f64 / 4.0).collect(),
        )
        .unwrap();
        let params = TsneParams { perplexity: 3.0, iterations: 120, exaggeration_iterations: 40, momentum_switch_iteration: 40, seed, ..TsneParams::default() };
        let a = tsne_embed(&x, &params).unwrap();
        let b = tsne_embed(&moved, &params).unwrap();
        let ab: Vec<u64> = a.matrix().as_slice().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.matrix().as_slice().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(ab, bb);
    }

    #[test]
    fn trace_is_finite(x in matrix(20, 4, -3.0..3.0), seed in any::<u64>()) {
        let params = TsneParams { iterations: 300, trace_every: 25, seed, ..TsneParams::default() };
        let out = tsne_embed_traced(&x, &params).unwrap();
        prop_assert!(out.trace.iter().all(|(_, kl)| kl.is_finite() && *kl >= 0.0));
        prop_assert!(out.trace.iter().any(|(t, _)| *t == 250));
        prop_assert_eq!(out.trace.last().map(|(t, _)| *t), Some(300));
        prop_assert!(out.embedding.matrix().is_finite());
    }
}
