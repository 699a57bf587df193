//! Synthetic subjects: marker trajectories for the exercise battery and full
//! squat sessions, with the commanded joint angles kept as ground truth.
//!
//! Every rep follows the raised-cosine profile `(1 - cos 2πc) / 2` over
//! completion `c` in [0, 1], so joints start and end at rest with the
//! extreme pose at mid-rep.

pub mod cohort;
pub mod skeleton;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band_force::{band_force, BandForceError};
use crate::calibration::BandCalibration;
use crate::io::{self as fio, FormatError};
use crate::manifest::SessionManifest;
use crate::markers::{FrameRecord, MarkerFrame, Side, Vec3};
use crate::protocol::{locate_set, standard_protocol, Group, SegmentLabel, SegmentPlan};

pub use cohort::{CohortSpec, CohortSubject, PlantedEffect};
pub use skeleton::{Anthropometry, ArmPose, BandRig, Pose, PoseCommand, Stance};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid anthropometry: {0}")]
    InvalidAnthropometry(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Force(#[from] BandForceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExerciseKind {
    Coronal,
    Sagittal,
    Transverse,
    Squat,
    Lunge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Good,
    Poor,
}

pub const LUNGE_KNEE_DEG: f64 = 90.0;
pub const LUNGE_SPLIT_M: f64 = 0.35;
/// Arms held slightly below the torso's forward axis during lunges.
pub const LUNGE_ARM_ELEVATION_DEG: f64 = -13.0;
pub const TRANSVERSE_YAW_DEG: f64 = 40.0;

pub fn completion_profile(c: f64) -> f64 {
    (1.0 - (2.0 * std::f64::consts::PI * c).cos()) / 2.0
}

/// Peak values one rep reaches at mid-completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepCommand {
    pub depth_deg: f64,
    pub lean_deg: f64,
    pub obliquity_deg: f64,
    pub roll_deg: f64,
}

/// Joint commands for `kind` at completion `c` of a rep.
pub fn exercise_command(kind: ExerciseKind, rep: &RepCommand, c: f64) -> PoseCommand {
    let prof = completion_profile(c);
    let base = PoseCommand {
        obliquity_deg: rep.obliquity_deg * prof,
        roll_deg: rep.roll_deg * prof,
        ..PoseCommand::standing(ArmPose::Overhead)
    };
    match kind {
        ExerciseKind::Squat => PoseCommand {
            knee_deg: rep.depth_deg * prof,
            lean_deg: rep.lean_deg * prof,
            ..base
        },
        ExerciseKind::Lunge => PoseCommand {
            knee_deg: LUNGE_KNEE_DEG * prof,
            arms: ArmPose::Elevation(LUNGE_ARM_ELEVATION_DEG),
            stance: Stance::Split(LUNGE_SPLIT_M),
            ..base
        },
        ExerciseKind::Transverse => PoseCommand {
            yaw_deg: TRANSVERSE_YAW_DEG * (2.0 * std::f64::consts::PI * c).sin(),
            arms: ArmPose::Elevation(0.0),
            ..base
        },
        ExerciseKind::Coronal => PoseCommand {
            arms: ArmPose::Abduction(90.0 - 60.0 * prof),
            ..base
        },
        ExerciseKind::Sagittal => PoseCommand {
            arms: ArmPose::Elevation(90.0 * prof),
            ..base
        },
    }
}

fn default_reps() -> usize {
    5
}
fn default_cadence() -> f64 {
    3.0
}
fn default_rate() -> f64 {
    120.0
}
fn default_depth() -> f64 {
    120.0
}
fn default_lean() -> f64 {
    33.0
}
fn default_poor_obliquity() -> f64 {
    8.0
}
fn default_poor_roll() -> f64 {
    20.0
}
fn default_rest() -> f64 {
    0.5
}
fn default_set_rest() -> f64 {
    1.0
}

/// Form parameters shared by single exercises and sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormSpec {
    #[serde(default)]
    pub form: Form,
    #[serde(default = "default_depth")]
    pub depth_deg: f64,
    #[serde(default = "default_lean")]
    pub lean_deg: f64,
    #[serde(default = "default_poor_obliquity")]
    pub poor_form_obliquity_deg: f64,
    #[serde(default = "default_poor_roll")]
    pub poor_form_trunk_roll_deg: f64,
}

impl Default for FormSpec {
    fn default() -> Self {
        Self {
            form: Form::Good,
            depth_deg: default_depth(),
            lean_deg: default_lean(),
            poor_form_obliquity_deg: default_poor_obliquity(),
            poor_form_trunk_roll_deg: default_poor_roll(),
        }
    }
}

impl FormSpec {
    pub fn rep_command(&self) -> RepCommand {
        let (obliquity_deg, roll_deg) = match self.form {
            Form::Good => (0.0, 0.0),
            Form::Poor => (self.poor_form_obliquity_deg, self.poor_form_trunk_roll_deg),
        };
        RepCommand {
            depth_deg: self.depth_deg,
            lean_deg: self.lean_deg,
            obliquity_deg,
            roll_deg,
        }
    }
}

/// Capture settings and body model shared by every synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureSpec {
    #[serde(default = "default_rate")]
    pub capture_rate_hz: f64,
    #[serde(default = "default_cadence")]
    pub cadence_s: f64,
    #[serde(default)]
    pub noise_std_m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub anthropometry: Anthropometry,
    #[serde(default)]
    pub band: BandRig,
    /// Standing time with the bands unclipped before the first rep.
    #[serde(default = "default_rest")]
    pub rest_s: f64,
}

impl Default for CaptureSpec {
    fn default() -> Self {
        Self {
            capture_rate_hz: default_rate(),
            cadence_s: default_cadence(),
            noise_std_m: 0.0,
            seed: 0,
            anthropometry: Anthropometry::default(),
            band: BandRig::default(),
            rest_s: default_rest(),
        }
    }
}

impl CaptureSpec {
    fn validate(&self) -> Result<(), SimError> {
        self.anthropometry.validate().map_err(SimError::InvalidAnthropometry)?;
        self.band.validate().map_err(SimError::InvalidSpec)?;
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if !(self.capture_rate_hz > 0.0 && self.capture_rate_hz.is_finite()) {
            return bad(format!(
                "capture_rate_hz must be positive, got {}",
                self.capture_rate_hz
            ));
        }
        if !(self.cadence_s > 0.0 && self.cadence_s.is_finite()) {
            return bad(format!("cadence_s must be positive, got {}", self.cadence_s));
        }
        if !(self.noise_std_m >= 0.0 && self.noise_std_m.is_finite()) {
            return bad(format!("noise_std_m must be non-negative, got {}", self.noise_std_m));
        }
        if !(self.rest_s >= 0.0 && self.rest_s.is_finite()) {
            return bad(format!("rest_s must be non-negative, got {}", self.rest_s));
        }
        Ok(())
    }

    /// Slack-band window the manifest declares, if the pre-roll holds any frames.
    fn rest_window(&self) -> Option<[f64; 2]> {
        let frames = (self.rest_s * self.capture_rate_hz).round() as usize;
        (frames > 0).then(|| [0.0, (frames - 1) as f64 / self.capture_rate_hz])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSpec {
    pub kind: ExerciseKind,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Split the reps into sets of this size; one set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps_per_set: Option<usize>,
    #[serde(flatten)]
    pub form: FormSpec,
    #[serde(flatten)]
    pub capture: CaptureSpec,
}

impl ExerciseSpec {
    pub fn new(kind: ExerciseKind, form: Form) -> Self {
        Self {
            kind,
            reps: default_reps(),
            reps_per_set: None,
            form: FormSpec {
                form,
                ..FormSpec::default()
            },
            capture: CaptureSpec::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub seq: u64,
    /// 1-based set and rep within the set, when the frame is inside a rep.
    pub set_index: Option<usize>,
    pub rep_index: Option<usize>,
    pub completion: Option<f64>,
    pub knee_deg: f64,
    pub lean_deg: f64,
    pub obliquity_deg: f64,
    pub roll_deg: f64,
    /// Expected sewn-marker spacing, cm.
    pub band_length_left_cm: f64,
    pub band_length_right_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepTruth {
    pub set_index: usize,
    pub rep_index: usize,
    pub start_t: f64,
    pub end_t: f64,
    pub command: RepCommand,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
    pub reps: Vec<RepTruth>,
    /// Rest spacing of the sewn markers, cm.
    pub l0_cm: f64,
}

pub const TRUTH_HEADER: &str = "time_s,seq,set_index,rep_index,completion,knee_deg,lean_deg,obliquity_deg,roll_deg,band_length_left_cm,band_length_right_cm";

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{TRUTH_HEADER}")?;
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.seq,
                opt(r.set_index),
                opt(r.rep_index),
                r.completion.map(|c| c.to_string()).unwrap_or_default(),
                r.knee_deg,
                r.lean_deg,
                r.obliquity_deg,
                r.roll_deg,
                r.band_length_left_cm,
                r.band_length_right_cm
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), FormatError> {
        let mut w = fio::create(path)?;
        self.write_csv(&mut w).map_err(|e| FormatError::io(path, e))?;
        w.flush().map_err(|e| FormatError::io(path, e))
    }
}

/// Frames, ground truth and the manifest describing them.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub manifest: SessionManifest,
    pub records: Vec<FrameRecord>,
    pub truth: GroundTruth,
}

impl Synthesis {
    pub fn frames(&self) -> impl Iterator<Item = &MarkerFrame> {
        self.records.iter().filter_map(|r| match r {
            FrameRecord::Frame(f) => Some(f),
            FrameRecord::SetEnd { .. } => None,
        })
    }
}

// ---------------------------------------------------------------------------
// Timeline
// ---------------------------------------------------------------------------

struct Timeline<'a> {
    capture: &'a CaptureSpec,
    rest_path_m: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    frame_no: u64,
    seq: u64,
    records: Vec<FrameRecord>,
    truth: GroundTruth,
}

impl<'a> Timeline<'a> {
    fn new(capture: &'a CaptureSpec) -> Self {
        let d = BandCalibration::default_averaged();
        let rest_path_m = skeleton::rest_path_m(&capture.anthropometry, &capture.band, d.k_cal, d.f_i, d.l_cal);
        let noise = (capture.noise_std_m > 0.0).then(|| Normal::new(0.0, capture.noise_std_m).expect("checked"));
        Self {
            capture,
            rest_path_m,
            rng: ChaCha8Rng::seed_from_u64(capture.seed),
            noise,
            frame_no: 0,
            seq: 0,
            records: Vec::new(),
            truth: GroundTruth {
                rows: Vec::new(),
                reps: Vec::new(),
                l0_cm: capture.band.rest_marker_spacing_cm(),
            },
        }
    }

    fn now(&self) -> f64 {
        self.frame_no as f64 / self.capture.capture_rate_hz
    }

    fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.capture.capture_rate_hz).round() as usize
    }

    fn emit(&mut self, cmd: &PoseCommand, clipped: bool, slot: Option<(usize, usize, f64)>) {
        let c = self.capture;
        let pose = skeleton::pose(&c.anthropometry, &c.band, cmd);
        let strain = if clipped {
            [Side::Left, Side::Right].map(|s| pose.band_path_m(s, &c.band) / self.rest_path_m - 1.0)
        } else {
            [0.0, 0.0]
        };
        let t = self.now();
        let mut frame = skeleton::marker_frame(&pose, &c.band, strain, t, self.seq);
        if let Some(noise) = self.noise {
            let rng = &mut self.rng;
            frame.map_positions(|p| p + Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng)));
        }
        let l0 = self.truth.l0_cm;
        self.truth.rows.push(TruthRow {
            t,
            seq: self.seq,
            set_index: slot.map(|s| s.0),
            rep_index: slot.map(|s| s.1),
            completion: slot.map(|s| s.2),
            knee_deg: cmd.knee_deg,
            lean_deg: cmd.lean_deg,
            obliquity_deg: cmd.obliquity_deg,
            roll_deg: cmd.roll_deg,
            band_length_left_cm: l0 * (1.0 + strain[0]),
            band_length_right_cm: l0 * (1.0 + strain[1]),
        });
        self.records.push(FrameRecord::Frame(frame));
        self.frame_no += 1;
        self.seq += 1;
    }

    fn stand(&mut self, kind: ExerciseKind, seconds: f64, clipped: bool) {
        let cmd = exercise_command(
            kind,
            &RepCommand {
                depth_deg: 0.0,
                lean_deg: 0.0,
                obliquity_deg: 0.0,
                roll_deg: 0.0,
            },
            0.0,
        );
        for _ in 0..self.frames_for(seconds) {
            self.emit(&cmd, clipped, None);
        }
    }

    fn rep(&mut self, kind: ExerciseKind, rep: &RepCommand, set_index: usize, rep_index: usize) {
        let n = self.frames_for(self.capture.cadence_s).max(2);
        let start_t = self.now();
        for j in 0..n {
            let c = j as f64 / n as f64;
            self.emit(&exercise_command(kind, rep, c), true, Some((set_index, rep_index, c)));
        }
        self.truth.reps.push(RepTruth {
            set_index,
            rep_index,
            start_t,
            end_t: self.now(),
            command: *rep,
        });
    }

    fn set_end(&mut self) {
        let t = if self.frame_no == 0 {
            0.0
        } else {
            (self.frame_no - 1) as f64 / self.capture.capture_rate_hz
        };
        self.records.push(FrameRecord::SetEnd { t, seq: self.seq });
        self.seq += 1;
    }
}

fn manifest_for(
    capture: &CaptureSpec,
    subject_id: &str,
    group: Group,
    segments: Vec<SegmentPlan>,
    extra: serde_json::Value,
) -> SessionManifest {
    let mut m = SessionManifest::new(subject_id, group, capture.capture_rate_hz);
    m.segments = segments;
    m.band.rest_window_s = capture.rest_window();
    if m.band.rest_window_s.is_none() {
        m.band.l0_left_cm = Some(capture.band.rest_marker_spacing_cm());
        m.band.l0_right_cm = Some(capture.band.rest_marker_spacing_cm());
    }
    m.metadata.insert("source".into(), "simulator".into());
    m.metadata.insert(
        "anthropometry".into(),
        serde_json::to_value(capture.anthropometry).expect("plain struct"),
    );
    m.metadata.insert("spec".into(), extra);
    m
}

/// One exercise as continuous cycles, in a single set unless `reps_per_set`
/// splits it. Sets are separated by a short standing pause.
pub fn synthesize(spec: &ExerciseSpec) -> Result<Synthesis, SimError> {
    spec.capture.validate()?;
    if spec.reps == 0 {
        return Err(SimError::InvalidSpec("reps must be at least 1".into()));
    }
    let per_set = spec.reps_per_set.unwrap_or(spec.reps);
    if per_set == 0 || !spec.reps.is_multiple_of(per_set) {
        return Err(SimError::InvalidSpec(format!(
            "reps_per_set {per_set} does not divide {} reps",
            spec.reps
        )));
    }
    let sets = spec.reps / per_set;
    let mut tl = Timeline::new(&spec.capture);
    tl.stand(spec.kind, spec.capture.rest_s, false);
    let cmd = spec.form.rep_command();
    for s in 0..sets {
        for r in 0..per_set {
            tl.rep(spec.kind, &cmd, s + 1, r + 1);
        }
        let pause = if sets > 1 { default_set_rest() } else { 0.0 };
        tl.stand(spec.kind, pause.max(2.0 / spec.capture.capture_rate_hz), true);
        tl.set_end();
    }
    let plan = vec![SegmentPlan {
        label: SegmentLabel::Training,
        planned_sets: sets,
        planned_reps: per_set,
    }];
    let manifest = manifest_for(
        &spec.capture,
        &format!("{:?}-{:?}", spec.kind, spec.form.form).to_lowercase(),
        Group::None,
        plan,
        serde_json::to_value(spec).expect("plain struct"),
    );
    Ok(Synthesis {
        manifest,
        records: tl.records,
        truth: tl.truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceProfile {
    pub completion_pct: Vec<f64>,
    pub left_n: Vec<f64>,
    pub right_n: Vec<f64>,
}

/// Band force over one rep at 101 completion points, from the closed-form
/// pose with no noise.
pub fn expected_force_profile(spec: &ExerciseSpec, cal: &BandCalibration) -> Result<ForceProfile, SimError> {
    spec.capture.validate()?;
    let c = &spec.capture;
    let d = BandCalibration::default_averaged();
    let rest_path = skeleton::rest_path_m(&c.anthropometry, &c.band, d.k_cal, d.f_i, d.l_cal);
    let l0 = c.band.rest_marker_spacing_cm();
    let rep = spec.form.rep_command();
    let mut out = ForceProfile {
        completion_pct: vec![0.0; 101],
        left_n: vec![0.0; 101],
        right_n: vec![0.0; 101],
    };
    for i in 0..=100 {
        let pose = skeleton::pose(
            &c.anthropometry,
            &c.band,
            &exercise_command(spec.kind, &rep, i as f64 / 100.0),
        );
        out.completion_pct[i] = i as f64;
        for (side, slot) in [(Side::Left, &mut out.left_n[i]), (Side::Right, &mut out.right_n[i])] {
            let length = l0 * pose.band_path_m(side, &c.band) / rest_path;
            *slot = band_force(cal, l0, length)?.force_n;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

/// Overrides the rep command for every rep of one set (1-based over the session).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetOverride {
    pub set_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lean_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obliquity_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roll_deg: Option<f64>,
}

/// Marker dropout: `marker_id` is invalid for `frames` frames from `start_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub marker_id: u8,
    pub start_s: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub subject_id: String,
    #[serde(default = "default_group")]
    pub group: Group,
    #[serde(default = "standard_protocol")]
    pub segments: Vec<SegmentPlan>,
    #[serde(default = "default_set_rest")]
    pub set_rest_s: f64,
    #[serde(flatten)]
    pub form: FormSpec,
    #[serde(flatten)]
    pub capture: CaptureSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_overrides: Vec<SetOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropouts: Vec<Dropout>,
}

fn default_group() -> Group {
    Group::None
}

impl SessionSpec {
    pub fn new(subject_id: impl Into<String>, group: Group) -> Self {
        Self {
            subject_id: subject_id.into(),
            group,
            segments: standard_protocol(),
            set_rest_s: default_set_rest(),
            form: FormSpec::default(),
            capture: CaptureSpec::default(),
            set_overrides: Vec::new(),
            dropouts: Vec::new(),
        }
    }

    /// The per-rep commands implied by form and overrides, set by set.
    pub fn rep_plan(&self) -> Vec<Vec<RepCommand>> {
        let base = self.form.rep_command();
        let mut plan = Vec::new();
        let mut set_index = 0;
        for seg in &self.segments {
            for _ in 0..seg.planned_sets {
                set_index += 1;
                let mut cmd = base;
                for o in self.set_overrides.iter().filter(|o| o.set_index == set_index) {
                    cmd.depth_deg = o.depth_deg.unwrap_or(cmd.depth_deg);
                    cmd.lean_deg = o.lean_deg.unwrap_or(cmd.lean_deg);
                    cmd.obliquity_deg = o.obliquity_deg.unwrap_or(cmd.obliquity_deg);
                    cmd.roll_deg = o.roll_deg.unwrap_or(cmd.roll_deg);
                }
                plan.push(vec![cmd; seg.planned_reps]);
            }
        }
        plan
    }
}

/// A full squat session following the spec's segment plan.
pub fn synthesize_session(spec: &SessionSpec) -> Result<Synthesis, SimError> {
    synthesize_session_with(spec, &spec.rep_plan())
}

/// A squat session with an explicit command for every rep of every set.
pub fn synthesize_session_with(spec: &SessionSpec, plan: &[Vec<RepCommand>]) -> Result<Synthesis, SimError> {
    spec.capture.validate()?;
    if spec.segments.is_empty() || plan.is_empty() {
        return Err(SimError::InvalidSpec("session plans no sets".into()));
    }
    if !(spec.set_rest_s >= 0.0) {
        return Err(SimError::InvalidSpec("set_rest_s must be non-negative".into()));
    }
    for d in &spec.dropouts {
        if !crate::markers::is_valid_id(d.marker_id) {
            return Err(SimError::InvalidSpec(format!(
                "dropout marker {} outside 1..=20",
                d.marker_id
            )));
        }
    }
    let kind = ExerciseKind::Squat;
    let mut tl = Timeline::new(&spec.capture);
    tl.stand(kind, spec.capture.rest_s, false);
    for (s, reps) in plan.iter().enumerate() {
        for (r, cmd) in reps.iter().enumerate() {
            tl.rep(kind, cmd, s + 1, r + 1);
        }
        tl.stand(kind, spec.set_rest_s.max(2.0 / spec.capture.capture_rate_hz), true);
        tl.set_end();
    }
    let mut records = tl.records;
    apply_dropouts(&mut records, &spec.dropouts, spec.capture.capture_rate_hz);
    if locate_set(&spec.segments, plan.len() - 1).is_none() {
        return Err(SimError::InvalidSpec("segment plan is empty".into()));
    }
    let manifest = manifest_for(
        &spec.capture,
        &spec.subject_id,
        spec.group,
        spec.segments.clone(),
        serde_json::to_value(spec).expect("plain struct"),
    );
    Ok(Synthesis {
        manifest,
        records,
        truth: tl.truth,
    })
}

fn apply_dropouts(records: &mut [FrameRecord], dropouts: &[Dropout], rate: f64) {
    for d in dropouts {
        let first = (d.start_s * rate).round() as usize;
        let frames = records.iter_mut().filter_map(|r| match r {
            FrameRecord::Frame(f) => Some(f),
            FrameRecord::SetEnd { .. } => None,
        });
        for f in frames.skip(first).take(d.frames) {
            f.invalidate(d.marker_id);
        }
    }
}

// ---------------------------------------------------------------------------
// Spec files
// ---------------------------------------------------------------------------

/// What a simulation spec file describes, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SimulationSpec {
    Exercise(ExerciseSpec),
    Session(SessionSpec),
    Cohort(CohortSpec),
}
