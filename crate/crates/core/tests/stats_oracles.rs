//! Independent oracles for the rank and variance tests: exhaustive
//! enumeration for Mann-Whitney, exact rational arithmetic for
//! Kruskal-Wallis H and Levene W.

use num::{BigRational, ToPrimitive, Zero};
use proptest::prelude::*;

use wrlab_core::stats::{kruskal_wallis, levene, mann_whitney_u};

fn int(n: usize) -> BigRational {
    BigRational::from_integer(n.into())
}

fn mean(v: &[BigRational]) -> BigRational {
    v.iter().cloned().sum::<BigRational>() / int(v.len())
}

/// Two-sided p as the share of rank assignments at least as far from the
/// null centre as the observed one.
fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let ranks: Vec<i64> = pooled
        .iter()
        .map(|&x| pooled.iter().filter(|&&y| y < x).count() as i64 + 1)
        .collect();
    let m = a.len();
    let u2 = |mask: u32| -> i64 {
        let r: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        2 * (r - (m * (m + 1) / 2) as i64) - (m * b.len()) as i64
    };
    let observed = u2((1 << m) - 1).abs();
    let masks = (0u32..1 << n).filter(|k| k.count_ones() as usize == m);
    let (hits, total) = masks.fold((0u64, 0u64), |(h, t), k| (h + (u2(k).abs() >= observed) as u64, t + 1));
    hits as f64 / total as f64
}

fn midranks(pooled: &[f64]) -> (Vec<BigRational>, Vec<usize>) {
    let ranks = pooled
        .iter()
        .map(|&x| {
            let below = pooled.iter().filter(|&&y| y < x).count();
            let equal = pooled.iter().filter(|&&y| y == x).count();
            BigRational::new((2 * below + equal + 1).into(), 2.into())
        })
        .collect();
    let mut distinct = pooled.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ties = distinct
        .iter()
        .map(|&x| pooled.iter().filter(|&&y| y == x).count())
        .filter(|&t| t > 1)
        .collect();
    (ranks, ties)
}

fn kruskal_wallis_h(groups: &[Vec<f64>]) -> Option<f64> {
    let pooled: Vec<f64> = groups.concat();
    let n = int(pooled.len());
    let one = int(1);
    let (ranks, ties) = midranks(&pooled);
    let mut sum = BigRational::zero();
    let mut offset = 0;
    for g in groups {
        let r: BigRational = ranks[offset..offset + g.len()].iter().cloned().sum();
        sum += &r * &r / int(g.len());
        offset += g.len();
    }
    let h = int(12) / (&n * (&n + &one)) * sum - int(3) * (&n + &one);
    let c = &one - ties.iter().map(|&t| int(t * t * t - t)).sum::<BigRational>() / (&n * &n * &n - &n);
    if c.is_zero() {
        None
    } else {
        (h / c).to_f64()
    }
}

fn levene_w(groups: &[Vec<f64>]) -> Option<f64> {
    let z: Vec<Vec<BigRational>> = groups
        .iter()
        .map(|g| {
            let x: Vec<BigRational> = g.iter().map(|&v| BigRational::from_float(v).unwrap()).collect();
            let m = mean(&x);
            x.iter().map(|v| num::abs(v - &m)).collect()
        })
        .collect();
    let grand = mean(&z.concat());
    let (mut between, mut within) = (BigRational::zero(), BigRational::zero());
    for zi in &z {
        let m = mean(zi);
        between += int(zi.len()) * (&m - &grand) * (&m - &grand);
        within += zi.iter().map(|v| (v - &m) * (v - &m)).sum::<BigRational>();
    }
    if within.is_zero() {
        return None;
    }
    let (n, k) = (int(z.concat().len()), int(groups.len()));
    ((&n - &k) / (&k - int(1)) * between / within).to_f64()
}

/// Distinct values split into two non-empty samples of combined size <= 10.
fn arb_small_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=10)
        .prop_flat_map(|n| (Just(n), 1..n, proptest::collection::vec(0.0f64..0.9, n)))
        .prop_map(|(n, m, jitter)| {
            // spacing of one with jitter below one keeps every value distinct
            let mut values: Vec<f64> = (0..n).map(|i| i as f64 + jitter[i]).collect();
            values.reverse();
            values.rotate_left(m / 2);
            let b = values.split_off(m);
            (values, b)
        })
}

fn arb_groups() -> impl Strategy<Value = Vec<Vec<f64>>> {
    let tied = proptest::collection::vec(proptest::collection::vec((0i32..6).prop_map(f64::from), 2..9), 2..5);
    let spread = proptest::collection::vec(
        proptest::collection::vec((-320i32..320).prop_map(|v| f64::from(v) / 8.0), 2..9),
        2..5,
    );
    prop_oneof![tied, spread]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn mann_whitney_matches_enumeration((a, b) in arb_small_pair()) {
        let p = mann_whitney_u(&a, &b).unwrap().p_value;
        prop_assert!((p - permutation_p(&a, &b)).abs() <= 1e-12, "p {} vs {}", p, permutation_p(&a, &b));
    }

    #[test]
    fn kruskal_wallis_matches_exact_formula(groups in arb_groups()) {
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let got = kruskal_wallis(&refs).unwrap().statistic;
        match kruskal_wallis_h(&groups) {
            Some(h) => prop_assert!((got - h).abs() <= 1e-12, "H {} vs {}", got, h),
            None => prop_assert_eq!(got, 0.0),
        }
    }

    #[test]
    fn levene_matches_exact_formula(groups in arb_groups()) {
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        match (levene(&refs), levene_w(&groups)) {
            (Ok(r), Some(w)) => prop_assert!((r.statistic - w).abs() <= 1e-12 * w.max(1.0), "W {} vs {}", r.statistic, w),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "levene {:?} vs oracle {:?}", got, want),
        }
    }
}
