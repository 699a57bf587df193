//! Group comparison with a normality and variance gate.
//!
//! When every group passes the KS normality check and Levene's test finds no
//! variance difference, pairs are compared with pooled t-tests. Otherwise
//! pairs use Mann-Whitney U. With three or more groups the omnibus test is
//! Kruskal-Wallis on either path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hypothesis::{kruskal_wallis, ks_normality, ks_two_sample, levene, mann_whitney_u, t_independent, TVariant};
use super::{StatsError, TestResult};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonPath {
    Parametric,
    Nonparametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub group: String,
    /// `None` when the test could not run; the reason is in the report notes.
    pub result: Option<TestResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    pub result: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallResult {
    pub result: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub path: ComparisonPath,
    pub normality: Vec<GroupTest>,
    pub levene: Option<TestResult>,
    pub pairwise: Vec<PairwiseResult>,
    pub overall: Option<OverallResult>,
    /// Two-sample KS between each pair, reported for reference only.
    pub distribution_checks: Vec<PairwiseResult>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn any_significant(&self) -> bool {
        self.pairwise.iter().any(|p| p.significant) || self.overall.as_ref().is_some_and(|o| o.significant)
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairwiseResult> {
        self.pairwise
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }
}

/// Compares per-subject values across named groups at `alpha`.
pub fn compare_groups(groups: &BTreeMap<String, Vec<f64>>, alpha: f64) -> Result<ComparisonReport, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    let names: Vec<&String> = groups.keys().collect();
    let samples: Vec<&[f64]> = groups.values().map(|v| v.as_slice()).collect();
    let mut notes = Vec::new();

    let normality: Vec<GroupTest> = names
        .iter()
        .zip(&samples)
        .map(|(name, s)| match ks_normality(s) {
            Ok(r) => GroupTest {
                group: name.to_string(),
                passed: r.p_value >= alpha,
                result: Some(r),
            },
            Err(e) => {
                notes.push(format!("normality check for `{name}` not run: {e}"));
                GroupTest {
                    group: name.to_string(),
                    result: None,
                    passed: false,
                }
            }
        })
        .collect();

    let levene_result = match levene(&samples) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("Levene test not run: {e}"));
            None
        }
    };
    let equal_var = levene_result.as_ref().is_some_and(|r| r.p_value >= alpha);
    let path = if normality.iter().all(|g| g.passed) && equal_var {
        ComparisonPath::Parametric
    } else {
        ComparisonPath::Nonparametric
    };

    let mut pairwise = Vec::new();
    let mut distribution_checks = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let result = match path {
                ComparisonPath::Parametric => t_independent(samples[i], samples[j], TVariant::Pooled)?,
                ComparisonPath::Nonparametric => mann_whitney_u(samples[i], samples[j])?,
            };
            pairwise.push(PairwiseResult {
                a: names[i].to_string(),
                b: names[j].to_string(),
                significant: result.p_value < alpha,
                result,
            });
            let ks = ks_two_sample(samples[i], samples[j])?;
            distribution_checks.push(PairwiseResult {
                a: names[i].to_string(),
                b: names[j].to_string(),
                significant: ks.p_value < alpha,
                result: ks,
            });
        }
    }

    let overall = if samples.len() >= 3 {
        let result = kruskal_wallis(&samples)?;
        if path == ComparisonPath::Parametric {
            notes.push("one-way comparison uses Kruskal-Wallis on both paths".into());
        }
        Some(OverallResult {
            significant: result.p_value < alpha,
            result,
        })
    } else {
        None
    };

    Ok(ComparisonReport {
        alpha,
        path,
        normality,
        levene: levene_result,
        pairwise,
        overall,
        distribution_checks,
        notes,
    })
}
