//! Joint angles and asymmetry measures from the marker schema.
//!
//! Flexion is reported from full extension: a straight leg is 0 degrees and
//! a deep squat is around 120. Frames are assumed z-up.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self as fio, FormatError};
use crate::markers::{MarkerFrame, Side, Vec3, LEFT_HIP, RIGHT_HIP, STERNUM};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate geometry: coincident points")]
    DegenerateGeometry,
    #[error("marker {0} is not valid in this frame")]
    MissingMarker(u8),
    #[error("frames not sorted by seq at index {index}")]
    UnsortedInput { index: usize },
}

/// Angle at vertex `b` between rays b->a and b->c, in degrees within [0, 180].
pub fn interior_angle(a: Vec3, b: Vec3, c: Vec3) -> Result<f64, KinematicsError> {
    let u = a - b;
    let v = c - b;
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Err(KinematicsError::DegenerateGeometry);
    }
    Ok(u.cross(&v).norm().atan2(u.dot(&v)).to_degrees())
}

fn marker(frame: &MarkerFrame, id: u8) -> Result<Vec3, KinematicsError> {
    frame.get(id).ok_or(KinematicsError::MissingMarker(id))
}

pub fn knee_flexion(frame: &MarkerFrame, side: Side) -> Result<f64, KinematicsError> {
    let ankle = marker(frame, side.ankle())?;
    let knee = marker(frame, side.knee())?;
    let hip = marker(frame, side.hip())?;
    Ok(180.0 - interior_angle(ankle, knee, hip)?)
}

/// Hip flexion using the sternum as the chest marker.
pub fn hip_flexion(frame: &MarkerFrame, side: Side) -> Result<f64, KinematicsError> {
    hip_flexion_with_chest(frame, side, STERNUM)
}

pub fn hip_flexion_with_chest(frame: &MarkerFrame, side: Side, chest_id: u8) -> Result<f64, KinematicsError> {
    let chest = marker(frame, chest_id)?;
    let hip = marker(frame, side.hip())?;
    let knee = marker(frame, side.knee())?;
    Ok(180.0 - interior_angle(chest, hip, knee)?)
}

/// Signed tilt of the hip line against the horizontal plane; positive when
/// the left hip sits higher.
pub fn pelvic_obliquity(frame: &MarkerFrame) -> Result<f64, KinematicsError> {
    let left = marker(frame, LEFT_HIP)?;
    let right = marker(frame, RIGHT_HIP)?;
    let span = left - right;
    let len = span.norm();
    if len == 0.0 {
        return Err(KinematicsError::DegenerateGeometry);
    }
    Ok((span.z / len).clamp(-1.0, 1.0).asin().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiometricSample {
    pub t: f64,
    pub knee_flexion_left: f64,
    pub knee_flexion_right: f64,
    pub hip_flexion_left: f64,
    pub hip_flexion_right: f64,
    pub pelvic_obliquity: f64,
    /// left minus right
    pub knee_diff: f64,
    /// left minus right
    pub hip_diff: f64,
}

impl BiometricSample {
    pub fn mean_knee_flexion(&self) -> f64 {
        (self.knee_flexion_left + self.knee_flexion_right) / 2.0
    }

    pub fn mean_hip_flexion(&self) -> f64 {
        (self.hip_flexion_left + self.hip_flexion_right) / 2.0
    }
}

pub fn biometrics(frame: &MarkerFrame) -> Result<BiometricSample, KinematicsError> {
    biometrics_with_chest(frame, STERNUM)
}

pub fn biometrics_with_chest(frame: &MarkerFrame, chest_id: u8) -> Result<BiometricSample, KinematicsError> {
    let knee_flexion_left = knee_flexion(frame, Side::Left)?;
    let knee_flexion_right = knee_flexion(frame, Side::Right)?;
    let hip_flexion_left = hip_flexion_with_chest(frame, Side::Left, chest_id)?;
    let hip_flexion_right = hip_flexion_with_chest(frame, Side::Right, chest_id)?;
    Ok(BiometricSample {
        t: frame.t,
        knee_flexion_left,
        knee_flexion_right,
        hip_flexion_left,
        hip_flexion_right,
        pelvic_obliquity: pelvic_obliquity(frame)?,
        knee_diff: knee_flexion_left - knee_flexion_right,
        hip_diff: hip_flexion_left - hip_flexion_right,
    })
}

/// A time point of the biometric stream; `sample` is `None` where a required
/// marker was missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiometricPoint {
    pub t: f64,
    pub sample: Option<BiometricSample>,
}

pub fn biometric_series(frames: &[MarkerFrame], chest_id: u8) -> Vec<BiometricPoint> {
    frames
        .iter()
        .map(|f| BiometricPoint {
            t: f.t,
            sample: biometrics_with_chest(f, chest_id).ok(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gap filling
// ---------------------------------------------------------------------------

/// 0.05 s at 480 Hz.
pub const DEFAULT_MAX_GAP_FRAMES: usize = 24;

/// Linearly interpolates each marker across invalid runs of at most
/// `max_gap_frames` frames that have valid neighbours on both sides.
/// Longer runs, and runs touching either end of the stream, stay invalid.
pub fn interpolate_gaps(frames: &[MarkerFrame], max_gap_frames: usize) -> Result<Vec<MarkerFrame>, KinematicsError> {
    for (i, w) in frames.windows(2).enumerate() {
        if w[1].seq <= w[0].seq {
            return Err(KinematicsError::UnsortedInput { index: i + 1 });
        }
    }
    let mut out = frames.to_vec();
    for id in MarkerFrame::ids() {
        let mut last_valid: Option<usize> = None;
        for i in 0..frames.len() {
            if !frames[i].is_valid(id) {
                continue;
            }
            if let Some(prev) = last_valid {
                let gap = i - prev - 1;
                if gap > 0 && gap <= max_gap_frames {
                    let p = frames[prev].raw_position(id);
                    let q = frames[i].raw_position(id);
                    let (t0, t1) = (frames[prev].t, frames[i].t);
                    for (j, frame) in out.iter_mut().enumerate().take(i).skip(prev + 1) {
                        let w = if t1 > t0 {
                            (frames[j].t - t0) / (t1 - t0)
                        } else {
                            (j - prev) as f64 / (i - prev) as f64
                        };
                        frame.set(id, p + (q - p) * w);
                    }
                }
            }
            last_valid = Some(i);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Biometric CSV
// ---------------------------------------------------------------------------

pub const BIOMETRIC_HEADER: [&str; 8] = [
    "time_s",
    "knee_flex_l",
    "knee_flex_r",
    "hip_flex_l",
    "hip_flex_r",
    "pelvic_obliquity",
    "knee_diff",
    "hip_diff",
];

pub fn write_biometrics<W: Write>(w: &mut W, points: &[BiometricPoint]) -> std::io::Result<()> {
    writeln!(w, "{}", BIOMETRIC_HEADER.join(","))?;
    for p in points {
        match &p.sample {
            Some(s) => writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.t,
                s.knee_flexion_left,
                s.knee_flexion_right,
                s.hip_flexion_left,
                s.hip_flexion_right,
                s.pelvic_obliquity,
                s.knee_diff,
                s.hip_diff
            )?,
            None => writeln!(w, "{},,,,,,,", p.t)?,
        }
    }
    Ok(())
}

pub fn write_biometrics_csv(path: &Path, points: &[BiometricPoint]) -> Result<(), FormatError> {
    let mut w = fio::create(path)?;
    write_biometrics(&mut w, points).map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}
