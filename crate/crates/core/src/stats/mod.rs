//! Normality, variance-equality, location tests and the orchestrator that
//! chooses between the parametric and rank-based paths.

pub mod compare;
pub mod distributions;
pub mod hypothesis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{compare_groups, ComparisonPath, ComparisonReport, GroupTest, PairwiseResult, DEFAULT_ALPHA};
pub use hypothesis::{
    kruskal_wallis, ks_normality, ks_one_sample, ks_two_sample, levene, mann_whitney_u, t_independent, TVariant,
};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("sample variance is zero")]
    ZeroVariance,
    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("absolute deviations from the group means do not vary within groups")]
    DegenerateDeviations,
    #[error("observations must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    KsNormality,
    KsTwoSample,
    Levene,
    TIndependent,
    MannWhitneyU,
    KruskalWallis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n_per_group: Vec<usize>,
    pub method_notes: String,
}

pub(crate) fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with n - 1 in the denominator.
pub(crate) fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}
