use proptest::prelude::*;
use uqfair::metrics::reliability;

/// Oracle grouping by `floor(conf * B)`, with exact edges `b/B` moved down
/// into the bin they close.
fn ece_oracle(conf: &[f64], correct: &[bool], bins: usize) -> (Vec<usize>, f64) {
    let b = bins as f64;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &c) in conf.iter().enumerate() {
        let mut idx = (c * b).floor() as usize;
        if idx as f64 == c * b {
            idx = idx.saturating_sub(1);
        }
        members[idx.min(bins - 1)].push(i);
    }
    let n = conf.len() as f64;
    let mut ece = 0.0;
    let counts = members.iter().map(Vec::len).collect();
    for m in &members {
        if m.is_empty() {
            continue;
        }
        let k = m.len() as f64;
        let acc = m.iter().filter(|&&i| correct[i]).count() as f64 / k;
        let mc = m.iter().map(|&i| conf[i]).sum::<f64>() / k;
        ece += k / n * (acc - mc).abs();
    }
    (counts, ece)
}

fn instance(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0.5f64..=1.0, any::<bool>()), n)
        .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn counts_sum_to_samples((conf, ok) in instance(1..300), bins in 1usize..20) {
        let r = reliability(&conf, &ok, bins).unwrap();
        prop_assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), conf.len());
        prop_assert_eq!(r.total, conf.len());
    }

    #[test]
    fn ece_ignores_sample_order((conf, ok) in instance(1..200), rot in 0usize..200) {
        let rot = rot % conf.len();
        let mut c2 = conf.clone();
        let mut o2 = ok.clone();
        c2.rotate_left(rot);
        o2.rotate_left(rot);
        c2.reverse();
        o2.reverse();
        let a = reliability(&conf, &ok, 10).unwrap().ece;
        let b = reliability(&c2, &o2, 10).unwrap().ece;
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn matches_binning_oracle((conf, ok) in instance(1..300), bins in 1usize..20) {
        let r = reliability(&conf, &ok, bins).unwrap();
        let (counts, ece) = ece_oracle(&conf, &ok, bins);
        prop_assert_eq!(r.bins.iter().map(|b| b.count).collect::<Vec<_>>(), counts);
        prop_assert!((r.ece - ece).abs() <= 1e-12);
    }

    #[test]
    fn calibrated_bins_have_zero_ece(per_bin in prop::collection::vec(0usize..4, 10)) {
        // Bin b holds b+1 copies of confidence (b+1)/10 paired with exactly
        // matching accuracy when scaled to 10 samples.
        let mut conf = Vec::new();
        let mut ok = Vec::new();
        for (b, &reps) in per_bin.iter().enumerate() {
            let c = (b + 1) as f64 / 10.0;
            for _ in 0..reps {
                for j in 0..10 {
                    conf.push(c);
                    ok.push(j <= b);
                }
            }
        }
        prop_assume!(!conf.is_empty());
        let r = reliability(&conf, &ok, 10).unwrap();
        prop_assert!(r.ece.abs() <= 1e-12, "ece {}", r.ece);
    }
}

#[test]
fn two_sample_hand_case() {
    let r = reliability(&[0.9, 0.9], &[true, false], 10).unwrap();
    let bin = &r.bins[8];
    assert_eq!(bin.count, 2);
    assert_eq!(bin.accuracy, Some(0.5));
    assert!((bin.mean_confidence.unwrap() - 0.9).abs() <= 1e-12);
    assert!((r.ece - 0.4).abs() <= 1e-12);
}

/// 50 random 50-sample instances plus the 200-sample case.
#[test]
fn random_instances_match_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
    for n in std::iter::repeat_n(50, 50).chain([200]) {
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..=1.0)).collect();
        let ok: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let r = reliability(&conf, &ok, 10).unwrap();
        let (counts, ece) = ece_oracle(&conf, &ok, 10);
        assert_eq!(r.bins.iter().map(|b| b.count).collect::<Vec<_>>(), counts);
        assert!((r.ece - ece).abs() <= 1e-12);
    }
}
