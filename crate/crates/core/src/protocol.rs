//! Rep segmentation and the session timeline.
//!
//! A rep is found with a hysteresis detector on the mean left/right knee
//! flexion: it opens at the first sample at or above `enter_deg` and closes at
//! the first later sample below `exit_deg`. Sets are never inferred; they
//! come from explicit set-end events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::BiometricPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("time does not increase at sample {index}")]
    NonMonotonicTime { index: usize },
    #[error("thresholds need enter > exit >= 0, got enter {enter} exit {exit}")]
    InvalidThresholds { enter: f64, exit: f64 },
    #[error("need {needed} valid reps, found {found}")]
    InsufficientReps { needed: usize, found: usize },
    #[error("session has no {0} segment")]
    MissingSegment(SegmentLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Baseline,
    Training,
    Post,
    Retention,
}

impl SegmentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentLabel::Baseline => "baseline",
            SegmentLabel::Training => "training",
            SegmentLabel::Post => "post",
            SegmentLabel::Retention => "retention",
        }
    }
}

impl std::fmt::Display for SegmentLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feedback arm a subject was assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    None,
    Visual,
    Resistance,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::None, Group::Visual, Group::Resistance];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::None => "none",
            Group::Visual => "visual",
            Group::Resistance => "resistance",
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub label: SegmentLabel,
    pub planned_sets: usize,
    pub planned_reps: usize,
}

/// Baseline 1x10, training 15x5, post 1x10, retention 1x10.
pub fn standard_protocol() -> Vec<SegmentPlan> {
    vec![
        SegmentPlan {
            label: SegmentLabel::Baseline,
            planned_sets: 1,
            planned_reps: 10,
        },
        SegmentPlan {
            label: SegmentLabel::Training,
            planned_sets: 15,
            planned_reps: 5,
        },
        SegmentPlan {
            label: SegmentLabel::Post,
            planned_sets: 1,
            planned_reps: 10,
        },
        SegmentPlan {
            label: SegmentLabel::Retention,
            planned_sets: 1,
            planned_reps: 10,
        },
    ]
}

/// Where the `set_index`-th closed set (0-based) falls in the plan: the
/// segment and the 0-based set number within it. Sets past the end of the
/// plan stay in the last segment.
pub fn locate_set(plan: &[SegmentPlan], set_index: usize) -> Option<(SegmentLabel, usize)> {
    let mut remaining = set_index;
    for seg in plan {
        if remaining < seg.planned_sets {
            return Some((seg.label, remaining));
        }
        remaining -= seg.planned_sets;
    }
    let last = plan.last()?;
    Some((last.label, last.planned_sets + remaining))
}

// ---------------------------------------------------------------------------
// Reps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepThresholds {
    pub enter_deg: f64,
    pub exit_deg: f64,
}

impl Default for RepThresholds {
    fn default() -> Self {
        Self {
            enter_deg: 60.0,
            exit_deg: 20.0,
        }
    }
}

impl RepThresholds {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.enter_deg > self.exit_deg && self.exit_deg >= 0.0 && self.enter_deg.is_finite() {
            Ok(())
        } else {
            Err(ProtocolError::InvalidThresholds {
                enter: self.enter_deg,
                exit: self.exit_deg,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MaxKneeFlexion,
    MaxHipFlexion,
    PeakAbsObliquity,
    PeakAbsKneeDiff,
    PeakAbsHipDiff,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::MaxKneeFlexion,
        MetricKind::MaxHipFlexion,
        MetricKind::PeakAbsObliquity,
        MetricKind::PeakAbsKneeDiff,
        MetricKind::PeakAbsHipDiff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::MaxKneeFlexion => "max_knee_flexion",
            MetricKind::MaxHipFlexion => "max_hip_flexion",
            MetricKind::PeakAbsObliquity => "peak_abs_obliquity",
            MetricKind::PeakAbsKneeDiff => "peak_abs_knee_diff",
            MetricKind::PeakAbsHipDiff => "peak_abs_hip_diff",
        }
    }

    /// The three asymmetry measures.
    pub fn is_asymmetry(self) -> bool {
        matches!(
            self,
            MetricKind::PeakAbsObliquity | MetricKind::PeakAbsKneeDiff | MetricKind::PeakAbsHipDiff
        )
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-rep performance measures, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RepMetrics {
    /// Peak of the mean left/right knee flexion.
    pub max_knee_flexion: f64,
    /// Peak of the mean left/right hip flexion.
    pub max_hip_flexion: f64,
    pub peak_abs_obliquity: f64,
    pub peak_abs_knee_diff: f64,
    pub peak_abs_hip_diff: f64,
}

impl RepMetrics {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::MaxKneeFlexion => self.max_knee_flexion,
            MetricKind::MaxHipFlexion => self.max_hip_flexion,
            MetricKind::PeakAbsObliquity => self.peak_abs_obliquity,
            MetricKind::PeakAbsKneeDiff => self.peak_abs_knee_diff,
            MetricKind::PeakAbsHipDiff => self.peak_abs_hip_diff,
        }
    }

    fn set(&mut self, kind: MetricKind, v: f64) {
        match kind {
            MetricKind::MaxKneeFlexion => self.max_knee_flexion = v,
            MetricKind::MaxHipFlexion => self.max_hip_flexion = v,
            MetricKind::PeakAbsObliquity => self.peak_abs_obliquity = v,
            MetricKind::PeakAbsKneeDiff => self.peak_abs_knee_diff = v,
            MetricKind::PeakAbsHipDiff => self.peak_abs_hip_diff = v,
        }
    }

    pub fn zip_with(&self, other: &RepMetrics, f: impl Fn(f64, f64) -> f64) -> RepMetrics {
        let mut out = RepMetrics::default();
        for kind in MetricKind::ALL {
            out.set(kind, f(self.get(kind), other.get(kind)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rep {
    pub start_t: f64,
    pub bottom_t: f64,
    pub end_t: f64,
    #[serde(flatten)]
    pub metrics: RepMetrics,
    /// False when the rep overlaps frames whose biometrics could not be computed.
    pub valid: bool,
}

/// Detects reps in a biometric stream. Gap samples never trigger a crossing;
/// a rep that spans any gap is kept but marked invalid. A rep still open when
/// the stream ends is dropped.
pub fn segment_reps(points: &[BiometricPoint], th: &RepThresholds) -> Result<Vec<Rep>, ProtocolError> {
    th.validate()?;
    for (i, w) in points.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(ProtocolError::NonMonotonicTime { index: i + 1 });
        }
    }
    let mut reps = Vec::new();
    let mut open: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(s) = &p.sample else { continue };
        let knee = s.mean_knee_flexion();
        match open {
            None if knee >= th.enter_deg => open = Some(i),
            Some(start) if knee < th.exit_deg => {
                reps.push(summarize(&points[start..=i]));
                open = None;
            }
            _ => {}
        }
    }
    Ok(reps)
}

fn summarize(span: &[BiometricPoint]) -> Rep {
    let mut metrics = RepMetrics {
        max_knee_flexion: f64::NEG_INFINITY,
        max_hip_flexion: f64::NEG_INFINITY,
        ..RepMetrics::default()
    };
    let mut bottom_t = span[0].t;
    let mut valid = true;
    for p in span {
        let Some(s) = &p.sample else {
            valid = false;
            continue;
        };
        let knee = s.mean_knee_flexion();
        if knee > metrics.max_knee_flexion {
            metrics.max_knee_flexion = knee;
            bottom_t = p.t;
        }
        metrics.max_hip_flexion = metrics.max_hip_flexion.max(s.mean_hip_flexion());
        metrics.peak_abs_obliquity = metrics.peak_abs_obliquity.max(s.pelvic_obliquity.abs());
        metrics.peak_abs_knee_diff = metrics.peak_abs_knee_diff.max(s.knee_diff.abs());
        metrics.peak_abs_hip_diff = metrics.peak_abs_hip_diff.max(s.hip_diff.abs());
    }
    Rep {
        start_t: span[0].t,
        bottom_t,
        end_t: span[span.len() - 1].t,
        metrics,
        valid,
    }
}

pub const DEFAULT_BLOCK_SIZE: usize = 10;

/// Means of every metric over the first `block_size` valid reps, in the order given.
pub fn block_average(reps: &[Rep], block_size: usize) -> Result<RepMetrics, ProtocolError> {
    let valid: Vec<&Rep> = reps.iter().filter(|r| r.valid).collect();
    if block_size == 0 || valid.len() < block_size {
        return Err(ProtocolError::InsufficientReps {
            needed: block_size.max(1),
            found: valid.len(),
        });
    }
    Ok(mean_metrics(&valid[..block_size]))
}

/// Means over the last `block_size` valid reps.
pub fn block_average_last(reps: &[Rep], block_size: usize) -> Result<RepMetrics, ProtocolError> {
    let valid: Vec<&Rep> = reps.iter().filter(|r| r.valid).collect();
    if block_size == 0 || valid.len() < block_size {
        return Err(ProtocolError::InsufficientReps {
            needed: block_size.max(1),
            found: valid.len(),
        });
    }
    Ok(mean_metrics(&valid[valid.len() - block_size..]))
}

fn mean_metrics(reps: &[&Rep]) -> RepMetrics {
    let n = reps.len() as f64;
    let mut out = RepMetrics::default();
    for kind in MetricKind::ALL {
        out.set(kind, reps.iter().map(|r| r.metrics.get(kind)).sum::<f64>() / n);
    }
    out
}

// ---------------------------------------------------------------------------
// Session record
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub label: SegmentLabel,
    pub sets: Vec<Vec<Rep>>,
}

impl SegmentRecord {
    /// All reps of the segment in chronological order.
    pub fn reps(&self) -> Vec<Rep> {
        self.sets.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub subject_id: String,
    pub group: Group,
    pub capture_rate_hz: f64,
    pub segments: Vec<SegmentRecord>,
}

impl SessionRecord {
    /// Builds the record from closed sets in order, placing each in the
    /// segment the plan assigns it to.
    pub fn from_sets(
        subject_id: impl Into<String>,
        group: Group,
        capture_rate_hz: f64,
        plan: &[SegmentPlan],
        sets: Vec<Vec<Rep>>,
    ) -> Self {
        let mut segments: Vec<SegmentRecord> = plan
            .iter()
            .map(|p| SegmentRecord {
                label: p.label,
                sets: Vec::new(),
            })
            .collect();
        for (i, set) in sets.into_iter().enumerate() {
            let Some((label, _)) = locate_set(plan, i) else { break };
            if let Some(seg) = segments.iter_mut().rev().find(|s| s.label == label) {
                seg.sets.push(set);
            }
        }
        Self {
            subject_id: subject_id.into(),
            group,
            capture_rate_hz,
            segments,
        }
    }

    pub fn segment(&self, label: SegmentLabel) -> Option<&SegmentRecord> {
        self.segments.iter().find(|s| s.label == label)
    }

    /// Differences from the planned set and rep counts, one message each.
    pub fn deviations(&self, plan: &[SegmentPlan]) -> Vec<String> {
        let mut out = Vec::new();
        for p in plan {
            let Some(seg) = self.segment(p.label) else {
                out.push(format!("{}: segment missing", p.label));
                continue;
            };
            if seg.sets.len() != p.planned_sets {
                out.push(format!(
                    "{}: {} sets, planned {}",
                    p.label,
                    seg.sets.len(),
                    p.planned_sets
                ));
            }
            for (i, set) in seg.sets.iter().enumerate() {
                if set.len() != p.planned_reps {
                    out.push(format!(
                        "{} set {}: {} reps, planned {}",
                        p.label,
                        i + 1,
                        set.len(),
                        p.planned_reps
                    ));
                }
                let invalid = set.iter().filter(|r| !r.valid).count();
                if invalid > 0 {
                    out.push(format!(
                        "{} set {}: {} reps invalidated by marker gaps",
                        p.label,
                        i + 1,
                        invalid
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartEnd {
    pub start: RepMetrics,
    pub end: RepMetrics,
    /// end minus start
    pub delta: RepMetrics,
}

/// Block averages over the first and the last `block_size` valid training reps.
pub fn training_start_end(session: &SessionRecord, block_size: usize) -> Result<StartEnd, ProtocolError> {
    let training = session
        .segment(SegmentLabel::Training)
        .filter(|s| !s.sets.is_empty())
        .ok_or(ProtocolError::MissingSegment(SegmentLabel::Training))?;
    let reps = training.reps();
    let start = block_average(&reps, block_size)?;
    let end = block_average_last(&reps, block_size)?;
    Ok(StartEnd {
        start,
        end,
        delta: end.zip_with(&start, |e, s| e - s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::BiometricSample;
    use proptest::prelude::*;

    fn point(t: f64, knee: f64) -> BiometricPoint {
        BiometricPoint {
            t,
            sample: Some(BiometricSample {
                t,
                knee_flexion_left: knee,
                knee_flexion_right: knee,
                hip_flexion_left: knee * 0.9,
                hip_flexion_right: knee * 0.9,
                pelvic_obliquity: 0.0,
                knee_diff: 0.0,
                hip_diff: 0.0,
            }),
        }
    }

    /// `cycles` raised-cosine squats to `depth` sampled at `rate` Hz, 3 s each.
    fn squats(cycles: usize, depth: f64, rate: f64) -> Vec<BiometricPoint> {
        let n = (cycles as f64 * 3.0 * rate) as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 / rate;
                let phase = (t / 3.0).fract();
                point(t, depth * (1.0 - (2.0 * std::f64::consts::PI * phase).cos()) / 2.0)
            })
            .collect()
    }

    #[test]
    fn five_clean_cycles_give_five_reps() {
        let reps = segment_reps(&squats(5, 120.0, 480.0), &RepThresholds::default()).unwrap();
        assert_eq!(reps.len(), 5);
        for r in &reps {
            assert!((r.metrics.max_knee_flexion - 120.0).abs() < 0.5);
            assert!(r.start_t < r.bottom_t && r.bottom_t < r.end_t);
            assert!(r.valid);
        }
    }

    #[test]
    fn flat_and_shallow_series_have_no_reps() {
        let flat: Vec<_> = (0..100).map(|i| point(i as f64 * 0.01, 0.0)).collect();
        assert!(segment_reps(&flat, &RepThresholds::default()).unwrap().is_empty());
        let shallow = squats(4, 50.0, 120.0);
        assert!(segment_reps(&shallow, &RepThresholds::default()).unwrap().is_empty());
    }

    #[test]
    fn hysteresis_ignores_wobble_near_threshold() {
        // dips to 55 (above exit) between two excursions count as one rep
        let knees = [0.0, 70.0, 55.0, 75.0, 10.0];
        let pts: Vec<_> = knees.iter().enumerate().map(|(i, &k)| point(i as f64, k)).collect();
        let reps = segment_reps(&pts, &RepThresholds::default()).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].bottom_t, 3.0);
    }

    #[test]
    fn unfinished_rep_is_dropped() {
        let knees = [0.0, 70.0, 100.0, 0.0, 80.0, 90.0];
        let pts: Vec<_> = knees.iter().enumerate().map(|(i, &k)| point(i as f64, k)).collect();
        assert_eq!(segment_reps(&pts, &RepThresholds::default()).unwrap().len(), 1);
    }

    #[test]
    fn gap_inside_rep_invalidates_it() {
        let mut pts = squats(2, 120.0, 60.0);
        pts[60].sample = None;
        let reps = segment_reps(&pts, &RepThresholds::default()).unwrap();
        assert_eq!(reps.len(), 2);
        assert!(!reps[0].valid);
        assert!(reps[1].valid);
    }

    #[test]
    fn bad_input_is_rejected() {
        let pts = vec![point(1.0, 0.0), point(1.0, 0.0)];
        assert_eq!(
            segment_reps(&pts, &RepThresholds::default()),
            Err(ProtocolError::NonMonotonicTime { index: 1 })
        );
        let th = RepThresholds {
            enter_deg: 20.0,
            exit_deg: 60.0,
        };
        assert!(segment_reps(&[], &th).is_err());
    }

    #[test]
    fn rep_count_survives_resampling() {
        let th = RepThresholds::default();
        let a = segment_reps(&squats(7, 120.0, 240.0), &th).unwrap();
        let b = segment_reps(&squats(7, 120.0, 480.0), &th).unwrap();
        assert_eq!(a.len(), b.len());
    }

    fn rep_with(v: f64) -> Rep {
        Rep {
            start_t: 0.0,
            bottom_t: 1.0,
            end_t: 2.0,
            metrics: RepMetrics {
                max_knee_flexion: v,
                max_hip_flexion: v,
                peak_abs_obliquity: v,
                peak_abs_knee_diff: v,
                peak_abs_hip_diff: v,
            },
            valid: true,
        }
    }

    #[test]
    fn block_average_examples() {
        let same: Vec<_> = (0..10).map(|_| rep_with(120.0)).collect();
        assert_eq!(block_average(&same, 10).unwrap().max_knee_flexion, 120.0);
        let ramp: Vec<_> = (0..10).map(|i| rep_with(100.0 + 10.0 * i as f64)).collect();
        assert_eq!(block_average(&ramp, 10).unwrap().max_knee_flexion, 145.0);
        assert_eq!(
            block_average(&ramp[..9], 10),
            Err(ProtocolError::InsufficientReps { needed: 10, found: 9 })
        );
    }

    #[test]
    fn block_average_is_chronological_and_skips_invalid() {
        let mut reps: Vec<_> = (0..12).map(|i| rep_with(i as f64)).collect();
        reps[0].valid = false;
        // first 10 valid reps are 1..=10
        assert_eq!(block_average(&reps, 10).unwrap().max_knee_flexion, 5.5);
        assert_eq!(block_average_last(&reps, 10).unwrap().max_knee_flexion, 6.5);
        reps.reverse();
        assert_eq!(block_average(&reps, 10).unwrap().max_knee_flexion, 6.5);
    }

    fn record(values: impl Fn(usize) -> f64) -> SessionRecord {
        let plan = standard_protocol();
        let mut sets = vec![(0..10).map(|_| rep_with(3.0)).collect::<Vec<_>>()];
        for s in 0..15 {
            sets.push((0..5).map(|r| rep_with(values(s * 5 + r))).collect());
        }
        SessionRecord::from_sets("s01", Group::Visual, 60.0, &plan, sets)
    }

    #[test]
    fn constant_training_has_zero_deltas() {
        let st = training_start_end(&record(|_| 4.0), 10).unwrap();
        for kind in MetricKind::ALL {
            assert_eq!(st.delta.get(kind), 0.0);
        }
    }

    #[test]
    fn linear_ramp_delta_matches_closed_form() {
        // 6 -> 1 over 75 reps: first block mean sits 4.5 steps in, last block 69.5.
        let step = 5.0 / 74.0;
        let st = training_start_end(&record(|i| 6.0 - step * i as f64), 10).unwrap();
        let oracle = -step * 65.0;
        assert!((st.delta.peak_abs_obliquity - oracle).abs() < 1e-12);
        assert!((oracle + 4.3919).abs() < 1e-4);
    }

    #[test]
    fn missing_training_segment_is_an_error() {
        let plan = standard_protocol();
        let rec = SessionRecord::from_sets("s", Group::None, 60.0, &plan, vec![vec![rep_with(1.0)]]);
        assert_eq!(
            training_start_end(&rec, 10),
            Err(ProtocolError::MissingSegment(SegmentLabel::Training))
        );
    }

    #[test]
    fn sets_are_placed_by_plan_and_deviations_reported() {
        let plan = standard_protocol();
        assert_eq!(locate_set(&plan, 0), Some((SegmentLabel::Baseline, 0)));
        assert_eq!(locate_set(&plan, 1), Some((SegmentLabel::Training, 0)));
        assert_eq!(locate_set(&plan, 15), Some((SegmentLabel::Training, 14)));
        assert_eq!(locate_set(&plan, 16), Some((SegmentLabel::Post, 0)));
        assert_eq!(locate_set(&plan, 18), Some((SegmentLabel::Retention, 1)));
        let rec = record(|_| 1.0);
        let dev = rec.deviations(&plan);
        assert!(dev.contains(&"post: 0 sets, planned 1".to_string()));
        assert_eq!(rec.segment(SegmentLabel::Training).unwrap().sets.len(), 15);
    }

    proptest! {
        #[test]
        fn reps_are_disjoint_and_ordered(knees in proptest::collection::vec(0.0f64..130.0, 2..400)) {
            let pts: Vec<_> = knees.iter().enumerate().map(|(i, &k)| point(i as f64, k)).collect();
            let reps = segment_reps(&pts, &RepThresholds::default()).unwrap();
            for r in &reps {
                prop_assert!(r.start_t <= r.bottom_t && r.bottom_t < r.end_t);
                prop_assert!(r.metrics.max_knee_flexion >= 60.0);
            }
            for w in reps.windows(2) {
                prop_assert!(w[0].end_t < w[1].start_t);
            }
        }
    }
}
