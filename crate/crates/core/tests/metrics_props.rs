use deepfa_core::metrics::{accuracy, aggregate, cohens_kappa, mean_std, propagation_accuracy};
use deepfa_core::MetricRecord;
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn kappa_invariant_under_relabeling((p, t) in pair(), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let pp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let tt: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let a = cohens_kappa(&p, &t).unwrap();
        let b = cohens_kappa(&pp, &tt).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_sample_order((p, t) in pair(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..p.len()).collect();
        let mut s = seed | 1;
        for i in (1..order.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let pp: Vec<usize> = order.iter().map(|&i| p[i]).collect();
        let tt: Vec<usize> = order.iter().map(|&i| t[i]).collect();
        prop_assert_eq!(accuracy(&p, &t).unwrap(), accuracy(&pp, &tt).unwrap());
        prop_assert!((cohens_kappa(&p, &t).unwrap() - cohens_kappa(&pp, &tt).unwrap()).abs() < 1e-12);
        prop_assert_eq!(propagation_accuracy(&p, &t).unwrap(), propagation_accuracy(&pp, &tt).unwrap());
    }

    #[test]
    fn perfect_accuracy_means_kappa_one(t in prop::collection::vec(0usize..4, 1..50)) {
        prop_assert_eq!(accuracy(&t, &t).unwrap(), 1.0);
        prop_assert_eq!(cohens_kappa(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn kappa_one_only_for_perfect_agreement((p, t) in pair()) {
        let k = cohens_kappa(&p, &t).unwrap();
        prop_assert!(k <= 1.0 + 1e-12);
        if p != t {
            prop_assert!(k < 1.0);
        }
    }

    #[test]
    fn aggregate_matches_direct_formulas(vals in prop::collection::vec((0.0f64..1.0, -1.0f64..1.0), 1..6)) {
        let records: Vec<MetricRecord> = vals
            .iter()
            .map(|&(accuracy, kappa)| MetricRecord { accuracy, kappa, propagation_accuracy: None })
            .collect();
        let agg = aggregate(&records).unwrap();
        let n = vals.len() as f64;
        let mean = vals.iter().map(|v| v.1).sum::<f64>() / n;
        let var = vals.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((agg.kappa.mean - mean).abs() < 1e-12);
        prop_assert!((agg.kappa.std - var.sqrt()).abs() < 1e-12);
        prop_assert_eq!(agg.partition_count, vals.len());
        prop_assert!(agg.propagation_accuracy.is_none());
        prop_assert_eq!(mean_std(&[vals[0].0]).std, 0.0);
    }
}
