//! Incremental session processing: frames arrive in seq order, each set-end
//! closes a set and produces its feedback. The live service and batch
//! analysis both drive this type, so they produce the same feedback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{FeedbackError, SetFeedback};
use crate::kinematics::{biometric_series, interpolate_gaps, BiometricPoint, KinematicsError};
use crate::manifest::{ManifestError, SessionManifest};
use crate::markers::{FrameRecord, MarkerFrame};
use crate::protocol::{locate_set, ProtocolError, Rep, SegmentLabel, SessionRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("seq {seq} does not follow {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("set {set_index} has no frames")]
    EmptySet { set_index: usize },
    #[error("session is complete")]
    Complete,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

/// Where a session stands in its protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub sets_closed: usize,
    pub planned_sets: usize,
    /// Segment of the set currently being recorded (or the last one when complete).
    pub segment: SegmentLabel,
    /// 1-based set number within that segment.
    pub set_in_segment: usize,
    pub sets_in_segment: usize,
    pub frames_in_open_set: usize,
    pub complete: bool,
}

impl Progress {
    /// Progress with `sets_closed` sets done and `open_frames` frames in the open set.
    pub fn at(manifest: &SessionManifest, sets_closed: usize, open_frames: usize) -> Self {
        let plan = &manifest.segments;
        let planned_sets = manifest.total_planned_sets();
        let complete = sets_closed >= planned_sets;
        let current = if complete {
            sets_closed.saturating_sub(1)
        } else {
            sets_closed
        };
        let (segment, within) = locate_set(plan, current).expect("validated plan is non-empty");
        Progress {
            sets_closed,
            planned_sets,
            segment,
            set_in_segment: within + 1,
            sets_in_segment: plan.iter().filter(|s| s.label == segment).map(|s| s.planned_sets).sum(),
            frames_in_open_set: open_frames,
            complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSet {
    pub points: Vec<BiometricPoint>,
    pub reps: Vec<Rep>,
}

#[derive(Debug, Clone)]
pub struct SessionProcessor {
    manifest: SessionManifest,
    last_seq: Option<u64>,
    open: Vec<MarkerFrame>,
    sets: Vec<ClosedSet>,
    feedback: Vec<SetFeedback>,
}

impl SessionProcessor {
    pub fn new(manifest: SessionManifest) -> Result<Self, SessionError> {
        manifest.validate()?;
        Ok(Self {
            manifest,
            last_seq: None,
            open: Vec::new(),
            sets: Vec::new(),
            feedback: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn is_complete(&self) -> bool {
        self.sets.len() >= self.manifest.total_planned_sets()
    }

    /// Checks that `seq` may come next without changing any state.
    pub fn check_seq(&self, seq: u64) -> Result<(), SessionError> {
        if self.is_complete() {
            return Err(SessionError::Complete);
        }
        match self.last_seq {
            Some(last) if seq <= last => Err(SessionError::OutOfOrder { seq, last }),
            _ => Ok(()),
        }
    }

    pub fn push_frame(&mut self, mut frame: MarkerFrame) -> Result<(), SessionError> {
        self.check_seq(frame.seq)?;
        let axis = self.manifest.vertical_axis;
        frame.map_positions(|p| axis.to_z_up(p));
        self.last_seq = Some(frame.seq);
        self.open.push(frame);
        Ok(())
    }

    /// Closes the open set and evaluates it.
    pub fn end_set(&mut self, seq: u64) -> Result<&SetFeedback, SessionError> {
        self.check_seq(seq)?;
        let set_index = self.sets.len() + 1;
        if self.open.is_empty() {
            return Err(SessionError::EmptySet { set_index });
        }
        let th = &self.manifest.thresholds;
        let filled = interpolate_gaps(&self.open, th.max_gap_frames)?;
        let points = biometric_series(&filled, self.manifest.chest_marker.id());
        let reps = crate::protocol::segment_reps(&points, &th.reps())?;
        let (segment, _) = locate_set(&self.manifest.segments, set_index - 1).expect("validated plan is non-empty");
        let fb = SetFeedback::for_set(set_index, segment, &reps, &th.form)?;
        self.last_seq = Some(seq);
        self.open.clear();
        self.sets.push(ClosedSet { points, reps });
        self.feedback.push(fb);
        Ok(self.feedback.last().expect("just pushed"))
    }

    /// Feeds one record; returns the feedback when it closes a set.
    pub fn push_record(&mut self, record: FrameRecord) -> Result<Option<&SetFeedback>, SessionError> {
        match record {
            FrameRecord::Frame(f) => self.push_frame(f).map(|_| None),
            FrameRecord::SetEnd { seq, .. } => self.end_set(seq).map(Some),
        }
    }

    pub fn feedback(&self) -> &[SetFeedback] {
        &self.feedback
    }

    pub fn sets(&self) -> &[ClosedSet] {
        &self.sets
    }

    /// Frames received since the last set-end.
    pub fn open_frames(&self) -> usize {
        self.open.len()
    }

    pub fn progress(&self) -> Progress {
        Progress::at(&self.manifest, self.sets.len(), self.open.len())
    }

    pub fn record(&self) -> SessionRecord {
        SessionRecord::from_sets(
            self.manifest.subject_id.clone(),
            self.manifest.group,
            self.manifest.capture_rate_hz,
            &self.manifest.segments,
            self.sets.iter().map(|s| s.reps.clone()).collect(),
        )
    }
}

/// Runs a whole recorded stream through a fresh processor.
pub fn process_records(
    manifest: SessionManifest,
    records: impl IntoIterator<Item = FrameRecord>,
) -> Result<SessionProcessor, SessionError> {
    let mut p = SessionProcessor::new(manifest)?;
    for r in records {
        p.push_record(r)?;
    }
    Ok(p)
}
