use std::collections::HashSet;

use proptest::prelude::*;

use cibp::diagnostics::{chisq_gof, tv_distance, CountTable};
use cibp::lof::{enumerate_lof_classes, left_order, lof_log_pmf};
use cibp::{CibpParams, FeatureMatrix};

fn matrix_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = FeatureMatrix> {
    (1..=max_rows, 0..=max_cols).prop_flat_map(|(p, k)| {
        proptest::collection::vec(proptest::collection::vec(0u8..=1, k), p)
            .prop_map(|rows| FeatureMatrix::from_rows(&rows).unwrap())
    })
}

fn params_strategy() -> impl Strategy<Value = CibpParams> {
    (0.1f64..10.0, 1e-3f64..20.0, 0.0f64..20.0).prop_map(|(g, a, k)| CibpParams::new(g, a, k).unwrap())
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn lof_pmf_invariant_under_column_permutation(
        (m, perm) in matrix_strategy(6, 7).prop_flat_map(|m| { let k = m.ncols(); (Just(m), perm_strategy(k)) }),
        prm in params_strategy(),
    ) {
        let a = lof_log_pmf(&left_order(&m), &prm).unwrap();
        let b = lof_log_pmf(&left_order(&m.permute_columns(&perm).unwrap()), &prm).unwrap();
        prop_assert_eq!(left_order(&m), left_order(&m.permute_columns(&perm).unwrap()));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn lof_pmf_invariant_under_row_permutation(
        (m, perm) in matrix_strategy(6, 7).prop_flat_map(|m| { let p = m.rows(); (Just(m), perm_strategy(p)) }),
        prm in params_strategy(),
    ) {
        let a = lof_log_pmf(&left_order(&m), &prm).unwrap();
        let b = lof_log_pmf(&left_order(&m.permute_rows(&perm).unwrap()), &prm).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn lof_pmf_is_a_log_probability(m in matrix_strategy(5, 6), prm in params_strategy()) {
        let v = lof_log_pmf(&left_order(&m), &prm).unwrap();
        prop_assert!(v <= 1e-12 && v.is_finite());
    }

    #[test]
    fn text_round_trip(m in matrix_strategy(70, 5)) {
        prop_assert_eq!(FeatureMatrix::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn tv_symmetric_and_bounded(
        a in proptest::collection::vec(0u8..6, 1..60),
        b in proptest::collection::vec(0u8..6, 1..60),
    ) {
        let ta: CountTable<u8> = a.into_iter().collect();
        let tb: CountTable<u8> = b.into_iter().collect();
        let ab = tv_distance(&ta, &tb).unwrap();
        let ba = tv_distance(&tb, &ta).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&ab));
        prop_assert!(tv_distance(&ta, &ta).unwrap() < 1e-15);
    }

    #[test]
    fn chisq_invariant_under_relabeling(counts in proptest::collection::vec(20u64..200, 3..7), shift in 1u64..50) {
        let k = counts.len();
        let cells: Vec<(u64, f64)> = (0..k as u64).map(|i| (i, 1.0 / k as f64)).collect();
        let relabeled: Vec<(u64, f64)> = cells.iter().map(|&(i, q)| ((i * 7 + shift) % 1000, q)).collect();
        let mut ta = CountTable::new();
        let mut tb = CountTable::new();
        for (i, &c) in counts.iter().enumerate() {
            ta.add_n(i as u64, c);
            tb.add_n((i as u64 * 7 + shift) % 1000, c);
        }
        let ra = chisq_gof(&ta, &cells, 5.0).unwrap();
        let rb = chisq_gof(&tb, &relabeled, 5.0).unwrap();
        prop_assert!((ra.statistic - rb.statistic).abs() < 1e-9);
        prop_assert_eq!(ra.df, rb.df);
    }
}

#[test]
fn fingerprints_injective_on_enumerated_classes() {
    for (p, k) in [(2, 8), (3, 5), (4, 3)] {
        let mut prints = HashSet::new();
        let mut count = 0;
        for cls in enumerate_lof_classes(p, k).unwrap() {
            prints.insert(cls.fingerprint());
            count += 1;
        }
        assert_eq!(prints.len(), count, "collision at p={p}, K<={k}");
    }
}
