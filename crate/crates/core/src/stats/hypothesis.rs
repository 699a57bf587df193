//! The individual tests. Every p-value is two-sided.

use super::distributions::{chi2_sf, erfc, f_sf, kolmogorov_sf, normal_cdf, t_two_sided};
use super::{check_finite, mean, variance, StatsError, TestKind, TestResult};

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// One-sample KS distance between the sample's ECDF and `cdf`, with the
/// asymptotic Kolmogorov p-value at `sqrt(n) * D`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, found: 0 });
    }
    check_finite(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// KS test of normality against a normal with the sample's own mean and
/// standard deviation.
pub fn ks_normality(sample: &[f64]) -> Result<TestResult, StatsError> {
    if sample.len() < 4 {
        return Err(StatsError::TooFewSamples {
            needed: 4,
            found: sample.len(),
        });
    }
    check_finite(sample)?;
    let m = mean(sample);
    let sd = variance(sample).sqrt();
    if sd == 0.0 || !sd.is_normal() {
        return Err(StatsError::ZeroVariance);
    }
    let (d, p) = ks_one_sample(sample, |x| normal_cdf((x - m) / sd))?;
    Ok(TestResult {
        test: TestKind::KsNormality,
        statistic: d,
        p_value: p,
        n_per_group: vec![sample.len()],
        method_notes: "asymptotic Kolmogorov p-value; mean and sd estimated from the sample, \
                       so p is conservative (Lilliefors situation)"
            .into(),
    })
}

/// Two-sample KS test of equal distributions, asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, found: 0 });
        }
        check_finite(s)?;
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(TestResult {
        test: TestKind::KsTwoSample,
        statistic: d,
        p_value: kolmogorov_sf(en * d),
        n_per_group: vec![a.len(), b.len()],
        method_notes: "asymptotic Kolmogorov p-value".into(),
    })
}

// ---------------------------------------------------------------------------
// Levene
// ---------------------------------------------------------------------------

/// Levene's test on absolute deviations from the group means.
pub fn levene(groups: &[&[f64]]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                found: g.len(),
            });
        }
        check_finite(g)?;
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).abs()).collect()
        })
        .collect();
    let k = groups.len() as f64;
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let n = n_total as f64;
    let z_means: Vec<f64> = z.iter().map(|zi| mean(zi)).collect();
    let z_grand = z.iter().flatten().sum::<f64>() / n;
    let between: f64 = z
        .iter()
        .zip(&z_means)
        .map(|(zi, m)| zi.len() as f64 * (m - z_grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&z_means)
        .map(|(zi, m)| zi.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    if within == 0.0 {
        return Err(StatsError::DegenerateDeviations);
    }
    let w = (n - k) / (k - 1.0) * between / within;
    Ok(TestResult {
        test: TestKind::Levene,
        statistic: w,
        p_value: f_sf(w, k - 1.0, n - k),
        n_per_group: groups.iter().map(|g| g.len()).collect(),
        method_notes: format!("mean-centred; F({}, {})", k - 1.0, n - k),
    })
}

// ---------------------------------------------------------------------------
// Student t
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TVariant {
    #[default]
    Pooled,
    Welch,
}

/// Independent two-sample t-test, statistic sign follows mean(a) - mean(b).
pub fn t_independent(a: &[f64], b: &[f64], variant: TVariant) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                found: s.len(),
            });
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    let diff = mean(a) - mean(b);
    let (se, df, note) = match variant {
        TVariant::Pooled => {
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
            ((sp2 * (1.0 / na + 1.0 / nb)).sqrt(), na + nb - 2.0, "pooled variance")
        }
        TVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            ((qa + qb).sqrt(), df, "Welch-Satterthwaite")
        }
    };
    if se == 0.0 || !se.is_finite() {
        return Err(StatsError::ZeroVariance);
    }
    let t = diff / se;
    Ok(TestResult {
        test: TestKind::TIndependent,
        statistic: t,
        p_value: t_two_sided(t, df),
        n_per_group: vec![a.len(), b.len()],
        method_notes: format!("{note}; df = {df}"),
    })
}

// ---------------------------------------------------------------------------
// Rank tests
// ---------------------------------------------------------------------------

/// Mid-ranks (1-based) of `values` and the tie-group sizes.
pub(crate) fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Largest combined size for which the exact null distribution is used.
pub const MANN_WHITNEY_EXACT_MAX: usize = 16;

/// Number of orderings of `m` + `n` distinct values giving each U in 0..=m*n.
pub fn mann_whitney_counts(m: usize, n: usize) -> Vec<u64> {
    // table[j][u] holds the counts for (i, j) while i advances
    let width = m * n + 1;
    let mut prev: Vec<Vec<u64>> = (0..=n)
        .map(|_| {
            let mut v = vec![0u64; width];
            v[0] = 1;
            v
        })
        .collect();
    for _i in 1..=m {
        let mut cur: Vec<Vec<u64>> = vec![vec![0u64; width]; n + 1];
        cur[0][0] = 1;
        for j in 1..=n {
            for u in 0..width {
                // largest value from the first sample beats all j of the second
                let from_a = if u >= j { prev[j][u - j] } else { 0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Mann-Whitney U test. The statistic is min(U_a, U_b).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, found: 0 });
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u_a = ra - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let u = u_a.min(u_b);

    let (p, notes) = if na + nb <= MANN_WHITNEY_EXACT_MAX && ties.is_empty() {
        let counts = mann_whitney_counts(na, nb);
        let total: u64 = counts.iter().sum();
        let k = u_a.round() as usize;
        let lower: u64 = counts[..=k].iter().sum();
        let upper: u64 = counts[k..].iter().sum();
        let p = (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
        (p, "exact null distribution".to_string())
    } else {
        let n = (na + nb) as f64;
        let mu = (na * nb) as f64 / 2.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
        let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term);
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
            erfc(z / std::f64::consts::SQRT_2).min(1.0)
        };
        let why = if ties.is_empty() {
            "large samples"
        } else {
            "ties present"
        };
        (p, format!("normal approximation ({why}); tie and continuity corrected"))
    };
    Ok(TestResult {
        test: TestKind::MannWhitneyU,
        statistic: u,
        p_value: p,
        n_per_group: vec![na, nb],
        method_notes: notes,
    })
}

/// Kruskal-Wallis H with tie correction; chi-square p with k - 1 df.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    for g in groups {
        if g.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, found: 0 });
        }
        check_finite(g)?;
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let c = 1.0 - ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * n * n - n);
    let df = groups.len() as f64 - 1.0;
    let (h, p, notes) = if c <= 0.0 {
        (0.0, 1.0, "all observations tied".to_string())
    } else {
        let h = (h_raw / c).max(0.0);
        (h, chi2_sf(h, df), format!("tie-corrected; chi-square with {df} df"))
    };
    Ok(TestResult {
        test: TestKind::KruskalWallis,
        statistic: h,
        p_value: p,
        n_per_group: groups.iter().map(|g| g.len()).collect(),
        method_notes: notes,
    })
}
