//! End-of-set form verdicts: depth, posture and symmetry, each green or red.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Rep, SegmentLabel};

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("set has no valid reps")]
    NoValidReps,
    #[error("threshold `{0}` must be positive")]
    InvalidThreshold(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormThresholds {
    /// Median peak knee flexion must reach this, degrees.
    pub depth_min_flexion: f64,
    /// Median peak hip flexion must not exceed this, degrees.
    pub posture_max_hip_flexion_at_bottom: f64,
    /// Bound on the medians of peak |obliquity|, |knee diff| and |hip diff|, degrees.
    pub symmetry_max: f64,
}

impl Default for FormThresholds {
    fn default() -> Self {
        Self {
            depth_min_flexion: 110.0,
            posture_max_hip_flexion_at_bottom: 130.0,
            symmetry_max: 5.0,
        }
    }
}

impl FormThresholds {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        for (name, v) in [
            ("depth_min_flexion", self.depth_min_flexion),
            (
                "posture_max_hip_flexion_at_bottom",
                self.posture_max_hip_flexion_at_bottom,
            ),
            ("symmetry_max", self.symmetry_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FeedbackError::InvalidThreshold(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Green,
    Red,
}

impl Verdict {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Verdict::Green
        } else {
            Verdict::Red
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub depth: Verdict,
    pub posture: Verdict,
    pub symmetry: Verdict,
}

impl Verdicts {
    pub const ALL_RED: Verdicts = Verdicts {
        depth: Verdict::Red,
        posture: Verdict::Red,
        symmetry: Verdict::Red,
    };
}

/// Median of a non-empty slice.
fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    crate::band_force::median_sorted(&values)
}

/// Judges a set from the medians of its valid reps.
pub fn evaluate_set(reps: &[Rep], th: &FormThresholds) -> Result<Verdicts, FeedbackError> {
    th.validate()?;
    let valid: Vec<&Rep> = reps.iter().filter(|r| r.valid).collect();
    if valid.is_empty() {
        return Err(FeedbackError::NoValidReps);
    }
    let med = |f: fn(&Rep) -> f64| median(valid.iter().map(|r| f(r)).collect());
    let depth = med(|r| r.metrics.max_knee_flexion);
    let posture = med(|r| r.metrics.max_hip_flexion);
    let symmetric = med(|r| r.metrics.peak_abs_obliquity) <= th.symmetry_max
        && med(|r| r.metrics.peak_abs_knee_diff) <= th.symmetry_max
        && med(|r| r.metrics.peak_abs_hip_diff) <= th.symmetry_max;
    Ok(Verdicts {
        depth: Verdict::from_ok(depth >= th.depth_min_flexion),
        posture: Verdict::from_ok(posture <= th.posture_max_hip_flexion_at_bottom),
        symmetry: Verdict::from_ok(symmetric),
    })
}

/// Feedback for one closed set, as streamed to clients and written to
/// `feedback.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFeedback {
    /// 1-based index over all sets of the session.
    pub set_index: usize,
    pub segment: SegmentLabel,
    #[serde(flatten)]
    pub verdicts: Verdicts,
    pub per_rep_detail: Vec<Rep>,
    /// Why every verdict is red when the set could not be judged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SetFeedback {
    /// Evaluates a set; a set without valid reps is reported all red with a note.
    pub fn for_set(
        set_index: usize,
        segment: SegmentLabel,
        reps: &[Rep],
        th: &FormThresholds,
    ) -> Result<Self, FeedbackError> {
        let (verdicts, note) = match evaluate_set(reps, th) {
            Ok(v) => (v, None),
            Err(FeedbackError::NoValidReps) => (Verdicts::ALL_RED, Some(FeedbackError::NoValidReps.to_string())),
            Err(e) => return Err(e),
        };
        Ok(Self {
            set_index,
            segment,
            verdicts,
            per_rep_detail: reps.to_vec(),
            note,
        })
    }
}
