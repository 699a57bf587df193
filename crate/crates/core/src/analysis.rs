//! Batch analysis of a recorded session and statistics over a cohort of
//! session reports.
//!
//! A session directory holds `manifest.json` and `frames.csv` (and, for
//! simulated sessions, `ground_truth.csv`). Analysis writes
//! `biometrics.csv`, `reps.csv`, `forces.csv`, `feedback.jsonl` and
//! `report.json` into the report directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band_force::{band_force_vector, estimate_rest_length, BandForceError, BandForceSample, BandGeometry};
use crate::calibration::BandCalibration;
use crate::feedback::{SetFeedback, Verdicts};
use crate::io::{self as fio, read_frames_csv, read_json, write_frames_csv, write_json, FormatError};
use crate::kinematics::{write_biometrics, BiometricPoint};
use crate::manifest::SessionManifest;
use crate::markers::{FrameRecord, MarkerFrame, Side};
use crate::protocol::{
    block_average, block_average_last, training_start_end, Group, MetricKind, ProtocolError, Rep, RepMetrics,
    SegmentLabel, StartEnd,
};
use crate::session::{process_records, SessionError, SessionProcessor};
use crate::simulator::{CohortSpec, SimError, Synthesis};
use crate::stats::{compare_groups, ComparisonReport, StatsError};
use rayon::prelude::*;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const BIOMETRICS_FILE: &str = "biometrics.csv";
pub const REPS_FILE: &str = "reps.csv";
pub const FORCES_FILE: &str = "forces.csv";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Force range the bands are expected to stay within during reps, N.
pub const FORCE_RANGE_N: (f64, f64) = (10.0, 40.0);

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{side} band rest length: {source}")]
    RestLength {
        side: Side,
        #[source]
        source: BandForceError,
    },
    #[error("manifest gives neither a rest window nor rest lengths for the {0} band")]
    NoRestLength(Side),
    #[error(transparent)]
    Force(#[from] BandForceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no session reports under {0}")]
    EmptyCohort(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

// ---------------------------------------------------------------------------
// Session directories
// ---------------------------------------------------------------------------

pub fn load_session_dir(dir: &Path) -> Result<(SessionManifest, Vec<FrameRecord>), FormatError> {
    let manifest: SessionManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let records = read_frames_csv(&dir.join(FRAMES_FILE))?;
    Ok((manifest, records))
}

pub fn write_session_dir(dir: &Path, synthesis: &Synthesis) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    write_json(&dir.join(MANIFEST_FILE), &synthesis.manifest)?;
    write_frames_csv(&dir.join(FRAMES_FILE), &synthesis.records)?;
    synthesis.truth.save_csv(&dir.join(GROUND_TRUTH_FILE))
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set_index: usize,
    pub segment: SegmentLabel,
    pub reps: usize,
    pub valid_reps: usize,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub label: SegmentLabel,
    pub sets: usize,
    pub reps: usize,
    pub valid_reps: usize,
    /// Means over the first and last block of valid reps, when there are enough.
    pub first_block: Option<RepMetrics>,
    pub last_block: Option<RepMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestLengths {
    pub left_cm: f64,
    pub right_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceSummary {
    pub samples: usize,
    /// Frames where a band marker was missing.
    pub missing: usize,
    pub min_n: f64,
    pub max_n: f64,
    pub mean_n: f64,
    pub in_rep_samples: usize,
    /// Share of in-rep samples inside the expected force range.
    pub in_rep_in_range_fraction: f64,
    pub extrapolated_fraction: f64,
    /// Pearson correlation of in-rep force with the mean knee and hip flexion.
    pub corr_knee_flexion: Option<f64>,
    pub corr_hip_flexion: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceAsymmetry {
    /// Correlation of the in-rep left-minus-right force with pelvic obliquity.
    pub corr_obliquity: Option<f64>,
    pub corr_knee_diff: Option<f64>,
    pub corr_hip_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub subject_id: String,
    pub group: Group,
    pub capture_rate_hz: f64,
    pub frames: usize,
    pub sets: Vec<SetSummary>,
    pub segments: Vec<SegmentSummary>,
    /// Training start and end blocks, when training has enough valid reps.
    pub training: Option<StartEnd>,
    pub deviations: Vec<String>,
    pub rest_length: RestLengths,
    pub force_left: ForceSummary,
    pub force_right: ForceSummary,
    pub force_asymmetry: ForceAsymmetry,
    /// Frames after the last set-end, which belong to no set.
    pub trailing_frames: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Everything batch analysis produces for one session.
#[derive(Debug, Clone)]
pub struct SessionAnalysis {
    pub report: SessionReport,
    pub feedback: Vec<SetFeedback>,
    pub biometrics: Vec<BiometricPoint>,
    pub reps: Vec<RepRow>,
    pub forces: Vec<BandForceSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub set_index: usize,
    pub segment: SegmentLabel,
    pub rep_in_set: usize,
    #[serde(flatten)]
    pub rep: Rep,
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

fn rest_lengths(manifest: &SessionManifest, frames: &[MarkerFrame]) -> Result<RestLengths, AnalysisError> {
    let band = &manifest.band;
    let mut out = [0.0; 2];
    for (slot, (side, fixed)) in out
        .iter_mut()
        .zip([(Side::Left, band.l0_left_cm), (Side::Right, band.l0_right_cm)])
    {
        *slot = match (fixed, band.rest_window_s) {
            (Some(l0), _) => l0,
            (None, Some([a, b])) => estimate_rest_length(frames, side, (a, b))
                .map_err(|source| AnalysisError::RestLength { side, source })?,
            (None, None) => return Err(AnalysisError::NoRestLength(side)),
        };
    }
    Ok(RestLengths {
        left_cm: out[0],
        right_cm: out[1],
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 3 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    (denom > 0.0).then(|| sxy / denom)
}

fn segment_summaries(processor: &SessionProcessor, block_size: usize) -> Vec<SegmentSummary> {
    let record = processor.record();
    record
        .segments
        .iter()
        .map(|seg| {
            let reps = seg.reps();
            let block = |f: fn(&[Rep], usize) -> Result<RepMetrics, ProtocolError>| f(&reps, block_size).ok();
            SegmentSummary {
                label: seg.label,
                sets: seg.sets.len(),
                reps: reps.len(),
                valid_reps: reps.iter().filter(|r| r.valid).count(),
                first_block: block(block_average),
                last_block: block(block_average_last),
            }
        })
        .collect()
}

/// Sorted, non-overlapping rep intervals for in-rep lookups.
struct RepIntervals(Vec<(f64, f64)>);

impl RepIntervals {
    fn contains(&self, t: f64) -> bool {
        let i = self.0.partition_point(|iv| iv.0 <= t);
        i > 0 && t <= self.0[i - 1].1
    }
}

/// Analyzes a recorded session end to end.
pub fn analyze_session(
    manifest: SessionManifest,
    records: Vec<FrameRecord>,
    cal: &BandCalibration,
) -> Result<SessionAnalysis, AnalysisError> {
    let axis = manifest.vertical_axis;
    let frames: Vec<MarkerFrame> = records
        .iter()
        .filter_map(|r| match r {
            FrameRecord::Frame(f) => {
                let mut f = f.clone();
                f.map_positions(|p| axis.to_z_up(p));
                Some(f)
            }
            FrameRecord::SetEnd { .. } => None,
        })
        .collect();
    let rest_length = rest_lengths(&manifest, &frames)?;
    let processor = process_records(manifest, records)?;
    let manifest = processor.manifest();
    let mut notes = Vec::new();
    let trailing_frames = processor.open_frames();
    if trailing_frames > 0 {
        notes.push(format!(
            "{trailing_frames} frames after the last set-end were not assigned to a set"
        ));
    }

    let mut biometrics = Vec::new();
    let mut rep_rows = Vec::new();
    let mut intervals = Vec::new();
    for (set, fb) in processor.sets().iter().zip(processor.feedback()) {
        biometrics.extend_from_slice(&set.points);
        for (i, rep) in set.reps.iter().enumerate() {
            intervals.push((rep.start_t, rep.end_t));
            rep_rows.push(RepRow {
                set_index: fb.set_index,
                segment: fb.segment,
                rep_in_set: i + 1,
                rep: *rep,
            });
        }
    }
    let intervals = RepIntervals(intervals);

    // Forces for every frame; biometrics line up with the frames of closed
    // sets, which come first and in order.
    let geoms = [
        BandGeometry::new(Side::Left, rest_length.left_cm)?,
        BandGeometry::new(Side::Right, rest_length.right_cm)?,
    ];
    let mut forces = Vec::with_capacity(frames.len() * 2);
    let mut summaries = [ForceSummary::default(); 2];
    let mut corr = [
        [Vec::new(), Vec::new(), Vec::new()],
        [Vec::new(), Vec::new(), Vec::new()],
    ];
    let mut asym: [Vec<f64>; 4] = Default::default();
    let (lo, hi) = FORCE_RANGE_N;
    let mut in_range = [0usize; 2];
    let mut extrapolated = [0usize; 2];
    for (i, frame) in frames.iter().enumerate() {
        let sample = biometrics.get(i).and_then(|p| p.sample);
        let in_rep = intervals.contains(frame.t);
        let mut pair = [None, None];
        for (k, geom) in geoms.iter().enumerate() {
            match band_force_vector(frame, geom, cal) {
                Ok(f) => {
                    let s = &mut summaries[k];
                    if s.samples == 0 {
                        s.min_n = f.force_n;
                        s.max_n = f.force_n;
                    }
                    s.samples += 1;
                    s.min_n = s.min_n.min(f.force_n);
                    s.max_n = s.max_n.max(f.force_n);
                    s.mean_n += f.force_n;
                    extrapolated[k] += f.extrapolated as usize;
                    if in_rep {
                        s.in_rep_samples += 1;
                        in_range[k] += (lo..=hi).contains(&f.force_n) as usize;
                    }
                    if let (true, Some(b)) = (in_rep, sample) {
                        corr[k][0].push(f.force_n);
                        corr[k][1].push(b.mean_knee_flexion());
                        corr[k][2].push(b.mean_hip_flexion());
                    }
                    pair[k] = Some(f.force_n);
                    forces.push(f);
                }
                Err(BandForceError::MissingMarker(_)) => summaries[k].missing += 1,
                Err(e) => return Err(e.into()),
            }
        }
        if let (true, Some(l), Some(r), Some(b)) = (in_rep, pair[0], pair[1], sample) {
            asym[0].push(l - r);
            asym[1].push(b.pelvic_obliquity);
            asym[2].push(b.knee_diff);
            asym[3].push(b.hip_diff);
        }
    }
    for k in 0..2 {
        let s = &mut summaries[k];
        if s.samples > 0 {
            s.mean_n /= s.samples as f64;
            s.extrapolated_fraction = extrapolated[k] as f64 / s.samples as f64;
        }
        if s.in_rep_samples > 0 {
            s.in_rep_in_range_fraction = in_range[k] as f64 / s.in_rep_samples as f64;
        }
        s.corr_knee_flexion = pearson(&corr[k][0], &corr[k][1]);
        s.corr_hip_flexion = pearson(&corr[k][0], &corr[k][2]);
    }
    let force_asymmetry = ForceAsymmetry {
        corr_obliquity: pearson(&asym[0], &asym[1]),
        corr_knee_diff: pearson(&asym[0], &asym[2]),
        corr_hip_diff: pearson(&asym[0], &asym[3]),
    };

    let record = processor.record();
    let block_size = manifest.thresholds.block_size;
    let training = match training_start_end(&record, block_size) {
        Ok(se) => Some(se),
        Err(e) => {
            notes.push(format!("training start/end not computed: {e}"));
            None
        }
    };
    let sets = processor
        .sets()
        .iter()
        .zip(processor.feedback())
        .map(|(set, fb)| SetSummary {
            set_index: fb.set_index,
            segment: fb.segment,
            reps: set.reps.len(),
            valid_reps: set.reps.iter().filter(|r| r.valid).count(),
            verdicts: fb.verdicts,
        })
        .collect();
    let report = SessionReport {
        subject_id: manifest.subject_id.clone(),
        group: manifest.group,
        capture_rate_hz: manifest.capture_rate_hz,
        frames: frames.len(),
        sets,
        segments: segment_summaries(&processor, block_size),
        training,
        deviations: record.deviations(&manifest.segments),
        rest_length,
        force_left: summaries[0],
        force_right: summaries[1],
        force_asymmetry,
        trailing_frames,
        notes,
    };
    Ok(SessionAnalysis {
        report,
        feedback: processor.feedback().to_vec(),
        biometrics,
        reps: rep_rows,
        forces,
    })
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

pub const REPS_HEADER: &str = "set_index,segment,rep_in_set,start_t,bottom_t,end_t,max_knee_flexion,max_hip_flexion,peak_abs_obliquity,peak_abs_knee_diff,peak_abs_hip_diff,valid";
pub const FORCES_HEADER: &str = "time_s,side,length_cm,force_n,dir_x,dir_y,dir_z,extrapolated";

pub fn write_reps<W: Write>(w: &mut W, rows: &[RepRow]) -> std::io::Result<()> {
    writeln!(w, "{REPS_HEADER}")?;
    for r in rows {
        let m = &r.rep.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.set_index,
            r.segment,
            r.rep_in_set,
            r.rep.start_t,
            r.rep.bottom_t,
            r.rep.end_t,
            m.max_knee_flexion,
            m.max_hip_flexion,
            m.peak_abs_obliquity,
            m.peak_abs_knee_diff,
            m.peak_abs_hip_diff,
            r.rep.valid
        )?;
    }
    Ok(())
}

pub fn write_forces<W: Write>(w: &mut W, forces: &[BandForceSample]) -> std::io::Result<()> {
    writeln!(w, "{FORCES_HEADER}")?;
    for f in forces {
        let [x, y, z] = f.direction;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            f.t,
            f.side.as_str(),
            f.length_cm,
            f.force_n,
            x,
            y,
            z,
            f.extrapolated
        )?;
    }
    Ok(())
}

/// One compact JSON object per line, in set order.
pub fn feedback_jsonl(feedback: &[SetFeedback]) -> String {
    let mut out = String::new();
    for fb in feedback {
        out.push_str(&serde_json::to_string(fb).expect("feedback serializes"));
        out.push('\n');
    }
    out
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), FormatError> {
    let mut w = fio::create(path)?;
    f(&mut w).map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn write_analysis(dir: &Path, analysis: &SessionAnalysis) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    write_with(&dir.join(BIOMETRICS_FILE), |w| {
        write_biometrics(w, &analysis.biometrics)
    })?;
    write_with(&dir.join(REPS_FILE), |w| write_reps(w, &analysis.reps))?;
    write_with(&dir.join(FORCES_FILE), |w| write_forces(w, &analysis.forces))?;
    write_with(&dir.join(FEEDBACK_FILE), |w| {
        w.write_all(feedback_jsonl(&analysis.feedback).as_bytes())
    })?;
    write_json(&dir.join(REPORT_FILE), &analysis.report)
}

// ---------------------------------------------------------------------------
// Cohort statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: MetricKind,
    /// Training end-minus-start deltas per group, one per subject.
    pub deltas: BTreeMap<String, Vec<f64>>,
    pub comparison: Option<ComparisonReport>,
    /// Whether the groups differ: the omnibus test with three or more
    /// groups, the single pairwise test with two.
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub alpha: f64,
    pub subjects: BTreeMap<String, Vec<String>>,
    /// Subjects left out because their training blocks could not be formed.
    pub excluded: Vec<String>,
    pub metrics: Vec<MetricComparison>,
}

impl CohortReport {
    pub fn flagged(&self) -> Vec<MetricKind> {
        self.metrics.iter().filter(|m| m.flagged).map(|m| m.metric).collect()
    }

    pub fn metric(&self, kind: MetricKind) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == kind)
    }
}

/// Subject id, group and training start/end for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDeltas {
    pub subject_id: String,
    pub group: Group,
    pub training: Option<StartEnd>,
}

impl From<&SessionReport> for SubjectDeltas {
    fn from(r: &SessionReport) -> Self {
        Self {
            subject_id: r.subject_id.clone(),
            group: r.group,
            training: r.training,
        }
    }
}

/// Runs the group comparison on training deltas for every metric.
pub fn cohort_stats(subjects: &[SubjectDeltas], alpha: f64) -> CohortReport {
    let mut ids: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut included = Vec::new();
    for s in subjects {
        match &s.training {
            Some(t) => {
                ids.entry(s.group.as_str().to_string())
                    .or_default()
                    .push(s.subject_id.clone());
                included.push((s.group, t.delta));
            }
            None => excluded.push(s.subject_id.clone()),
        }
    }
    let metrics = MetricKind::ALL
        .iter()
        .map(|&metric| {
            let mut deltas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (group, d) in &included {
                deltas
                    .entry(group.as_str().to_string())
                    .or_default()
                    .push(d.get(metric));
            }
            match compare_groups(&deltas, alpha) {
                Ok(c) => MetricComparison {
                    metric,
                    flagged: match &c.overall {
                        Some(o) => o.significant,
                        None => c.any_significant(),
                    },
                    deltas,
                    comparison: Some(c),
                    error: None,
                },
                Err(e) => MetricComparison {
                    metric,
                    deltas,
                    comparison: None,
                    flagged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    CohortReport {
        alpha,
        subjects: ids,
        excluded,
        metrics,
    }
}

/// Every `report.json` below `dir`, in path order.
pub fn find_reports(dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            FormatError::io(&path, e.into())
        })?;
        if entry.file_type().is_file() && entry.file_name() == REPORT_FILE {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

pub fn cohort_stats_from_dir(dir: &Path, alpha: f64) -> Result<CohortReport, AnalysisError> {
    let paths = find_reports(dir)?;
    if paths.is_empty() {
        return Err(AnalysisError::EmptyCohort(dir.display().to_string()));
    }
    let subjects = paths
        .iter()
        .map(|p| read_json::<SessionReport>(p).map(|r| SubjectDeltas::from(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cohort_stats(&subjects, alpha))
}

/// Synthesizes and analyzes every subject of a cohort, in subject order.
/// With `out`, each subject's session lands in `out/<subject_id>/` and its
/// analysis in `out/<subject_id>/report/`.
pub fn analyze_cohort(
    spec: &CohortSpec,
    cal: &BandCalibration,
    out: Option<&Path>,
) -> Result<Vec<SessionReport>, AnalysisError> {
    (0..spec.subject_count())
        .into_par_iter()
        .map(|i| {
            let synthesis = spec.subject(i)?.synthesize()?;
            let dir = out.map(|o| o.join(&synthesis.manifest.subject_id));
            if let Some(dir) = &dir {
                write_session_dir(dir, &synthesis)?;
            }
            let analysis = analyze_session(synthesis.manifest, synthesis.records, cal)?;
            if let Some(dir) = &dir {
                write_analysis(&dir.join("report"), &analysis)?;
            }
            Ok(analysis.report)
        })
        .collect()
}
