use proptest::prelude::*;
use uqfair::fairness::{
    consistency, group_fairness, is_unfair, knn_indices, GroupAudit, Ratio, RATIO_NAMES,
};
use uqfair::uncertainty::GroupUncertainty;

fn unc(group: u8, e: f64, a: f64) -> GroupUncertainty {
    GroupUncertainty {
        group,
        epistemic: e,
        aleatoric: a,
        predictive: e + a,
        count: 1,
    }
}

/// Random labelled predictions for one group with random uncertainties.
fn audit(group: u8) -> impl Strategy<Value = GroupAudit> {
    (
        prop::collection::vec((0u8..2, 0u8..2), 1..40),
        0.0f64..0.3,
        0.0f64..0.5,
    )
        .prop_map(move |(pairs, e, a)| {
            let preds: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            GroupAudit::new(group, &preds, &labels, unc(group, e, a)).unwrap()
        })
}

/// O(N^2) oracle: sort every other index by (distance, index).
fn knn_oracle(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, r)| {
            let s: f64 = r.iter().zip(&rows[i]).map(|(a, b)| (a - b) * (a - b)).sum();
            (s, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn swapping_groups_inverts_every_ratio(a0 in audit(0), a1 in audit(1), tau in 0.0f64..0.5) {
        let fwd = group_fairness(&a0, &a1, tau).unwrap();
        let rev = group_fairness(&a1, &a0, tau).unwrap();
        for ((name, f), r) in RATIO_NAMES.iter().zip(fwd.ratios()).zip(rev.ratios()) {
            if let (Some(x), Some(y)) = (f.value, r.value) {
                if x > 0.0 {
                    prop_assert!((x - 1.0 / y).abs() <= 1e-12 * x.max(1.0), "{name}: {x} vs 1/{y}");
                }
            }
            prop_assert_eq!(f.unfair, r.unfair, "{} flag changed", name);
        }
    }

    #[test]
    fn flags_follow_threshold(a0 in audit(0), a1 in audit(1), tau in 0.0f64..0.5) {
        let rep = group_fairness(&a0, &a1, tau).unwrap();
        for r in rep.ratios() {
            match r.value {
                Some(v) => {
                    let far = (v - 1.0).abs() > tau || v <= 0.0 || (1.0 / v - 1.0).abs() > tau;
                    prop_assert_eq!(r.unfair, far);
                    if (v - 1.0).abs() > tau {
                        prop_assert!(r.unfair);
                    }
                }
                None => prop_assert!(r.unfair),
            }
        }
    }

    #[test]
    fn self_audit_is_all_ones(a in audit(0), tau in 0.0f64..0.5) {
        // Conditional rates need both labels present.
        let p = a.performance;
        prop_assume!(p.tp + p.fn_ > 0 && p.tn + p.fp > 0);
        let rep = group_fairness(&a, &a, tau).unwrap();
        for r in rep.ratios() {
            prop_assert_eq!(r.value, Some(1.0));
            prop_assert!(!r.unfair);
        }
    }

    #[test]
    fn knn_matches_sort_oracle(
        rows in prop::collection::vec(prop::collection::vec(-3i32..3, 2), 5..40),
        k in 1usize..6,
    ) {
        // Integer grid coordinates force many distance ties.
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let flat = rows.concat();
        let k = k.min(rows.len() - 1);
        for i in 0..rows.len() {
            prop_assert_eq!(knn_indices(&flat, 2, i, k).unwrap(), knn_oracle(&rows, i, k));
        }
    }

    #[test]
    fn consistency_scores_bounded(
        values in prop::collection::vec(0.0f64..0.5, 3..30),
        seed_rows in prop::collection::vec(-5.0f64..5.0, 30),
        k in 1usize..5,
    ) {
        let n = values.len();
        let k = k.min(n - 1);
        let s = consistency(&values, &seed_rows[..n], 1, k).unwrap();
        prop_assert!(s.iter().all(|v| *v <= 1.0));
    }

    #[test]
    fn constant_field_is_fully_consistent(n in 2usize..30, v in 0.0f64..1.0, k in 1usize..5) {
        let features: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = consistency(&vec![v; n], &features, 1, k.min(n - 1)).unwrap();
        prop_assert!(s.iter().all(|x| (*x - 1.0).abs() <= 1e-15));
    }

    #[test]
    fn all_neighbours_use_the_global_mean(
        values in prop::collection::vec(0.0f64..1.0, 2..25),
        xs in prop::collection::vec(-5.0f64..5.0, 25),
    ) {
        let n = values.len();
        let s = consistency(&values, &xs[..n], 1, n - 1).unwrap();
        let total: f64 = values.iter().sum();
        for (i, si) in s.iter().enumerate() {
            let others = (total - values[i]) / (n - 1) as f64;
            prop_assert!((si - (1.0 - (values[i] - others).abs())).abs() <= 1e-12);
        }
    }
}

/// 50 random 50-sample instances, k = 3.
#[test]
fn knn_oracle_on_random_instances() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let flat = rows.concat();
        for i in 0..50 {
            assert_eq!(knn_indices(&flat, 3, i, 3).unwrap(), knn_oracle(&rows, i, 3));
        }
    }
}

#[test]
fn hand_confusion_matrix() {
    let a = GroupAudit::new(0, &[1, 0, 1, 0], &[1, 1, 0, 0], unc(0, 0.0, 0.0)).unwrap();
    let p = a.performance;
    assert_eq!((p.tp, p.fp, p.tn, p.fn_), (1, 1, 1, 1));
    for v in [Some(p.acc), p.ppv, p.npv, p.fpr, p.fnr] {
        assert_eq!(v, Some(0.5));
    }
}

#[test]
fn statistical_parity_and_table_aleatoric_ratio() {
    let g0 = GroupAudit::new(0, &[1, 1, 0, 0], &[1, 1, 0, 0], unc(0, 0.01, 0.4926)).unwrap();
    let g1 = GroupAudit::new(1, &[1, 0, 0, 0], &[1, 1, 0, 0], unc(1, 0.01, 0.1053)).unwrap();
    let r = group_fairness(&g0, &g1, 0.2).unwrap();
    assert_eq!(r.sp.value, Some(2.0));
    let alea = r.alea.value.unwrap();
    assert_eq!(format!("{alea:.2}"), "4.68");
    assert!(r.alea.unfair);
}

#[test]
fn undefined_ratio_is_flagged_with_reason() {
    let r = Ratio::between(Some(0.3), Some(0.0), 0.2);
    assert_eq!(r.value, None);
    assert!(r.unfair);
    assert_eq!(r.reason.as_deref(), Some("degenerate denominator"));
    assert!(is_unfair(0.0, 0.2));
}
