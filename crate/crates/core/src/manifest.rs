//! The JSON session manifest that accompanies a frame file or opens a live session.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::FormThresholds;
use crate::kinematics::DEFAULT_MAX_GAP_FRAMES;
use crate::markers::{VerticalAxis, C4_SPINOUS, STERNUM};
use crate::protocol::{standard_protocol, Group, RepThresholds, SegmentPlan, DEFAULT_BLOCK_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// Which torso marker stands in for the chest in the hip angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChestMarker {
    #[default]
    Sternum,
    C4,
}

impl ChestMarker {
    pub fn id(self) -> u8 {
        match self {
            ChestMarker::Sternum => STERNUM,
            ChestMarker::C4 => C4_SPINOUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestThresholds {
    pub enter_deg: f64,
    pub exit_deg: f64,
    pub max_gap_frames: usize,
    pub block_size: usize,
    #[serde(flatten)]
    pub form: FormThresholds,
}

impl Default for ManifestThresholds {
    fn default() -> Self {
        let reps = RepThresholds::default();
        Self {
            enter_deg: reps.enter_deg,
            exit_deg: reps.exit_deg,
            max_gap_frames: DEFAULT_MAX_GAP_FRAMES,
            block_size: DEFAULT_BLOCK_SIZE,
            form: FormThresholds::default(),
        }
    }
}

impl ManifestThresholds {
    pub fn reps(&self) -> RepThresholds {
        RepThresholds {
            enter_deg: self.enter_deg,
            exit_deg: self.exit_deg,
        }
    }
}

/// How band rest lengths are obtained: fixed values, or the median marker
/// spacing over a slack-band window at the start of the capture.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BandSetup {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rest_window_s: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0_left_cm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0_right_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    pub group: Group,
    pub capture_rate_hz: f64,
    #[serde(default)]
    pub vertical_axis: VerticalAxis,
    #[serde(default)]
    pub chest_marker: ChestMarker,
    #[serde(default)]
    pub thresholds: ManifestThresholds,
    #[serde(default = "standard_protocol")]
    pub segments: Vec<SegmentPlan>,
    #[serde(default)]
    pub band: BandSetup,
    /// Free-form descriptive data (anthropometry, simulator settings).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl SessionManifest {
    pub fn new(subject_id: impl Into<String>, group: Group, capture_rate_hz: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            group,
            capture_rate_hz,
            vertical_axis: VerticalAxis::Z,
            chest_marker: ChestMarker::Sternum,
            thresholds: ManifestThresholds::default(),
            segments: standard_protocol(),
            band: BandSetup::default(),
            metadata: serde_json::Map::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let bad = |m: String| Err(ManifestError::Invalid(m));
        if self.subject_id.trim().is_empty() {
            return bad("subject_id is empty".into());
        }
        if !(self.capture_rate_hz > 0.0 && self.capture_rate_hz.is_finite()) {
            return bad(format!(
                "capture_rate_hz must be positive, got {}",
                self.capture_rate_hz
            ));
        }
        self.thresholds
            .reps()
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        self.thresholds
            .form
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        if self.thresholds.block_size == 0 {
            return bad("block_size must be at least 1".into());
        }
        if self.segments.is_empty() {
            return bad("segments are empty".into());
        }
        if let Some(seg) = self
            .segments
            .iter()
            .find(|s| s.planned_sets == 0 || s.planned_reps == 0)
        {
            return bad(format!("segment {} plans zero sets or reps", seg.label));
        }
        if let Some([a, b]) = self.band.rest_window_s {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return bad(format!("rest window [{a}, {b}] is empty"));
            }
        }
        for l0 in [self.band.l0_left_cm, self.band.l0_right_cm].into_iter().flatten() {
            if !(l0 > 0.0 && l0.is_finite()) {
                return bad(format!("band rest length {l0} cm must be positive"));
            }
        }
        Ok(())
    }

    pub fn total_planned_sets(&self) -> usize {
        self.segments.iter().map(|s| s.planned_sets).sum()
    }
}
