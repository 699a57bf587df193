//! Band force from sewn-marker geometry.
//!
//! The force model scales the calibration stiffness by the ratio of the
//! calibration segment length to the instrumented segment's rest length:
//!
//! ```text
//! F = k_cal * (l_cal / l0) * (length - l0) + f_i
//! ```
//!
//! It is evaluated through the relative stretch `(length - l0) / l0`, so the
//! result depends only on that ratio. A slack band transmits no force, so
//! negative model outputs clamp to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::BandCalibration;
use crate::markers::{MarkerFrame, Side, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum BandForceError {
    #[error("rest length must be positive, got {0} cm")]
    NonPositiveRestLength(f64),
    #[error("band marker {0} is not valid in this frame")]
    MissingMarker(u8),
    #[error("band markers coincide; no direction")]
    DegenerateGeometry,
    #[error("need at least {needed} frames with both band markers in the rest window, found {found}")]
    InsufficientFrames { needed: usize, found: usize },
    #[error("marker ids {knee}/{wrist} do not belong to the {side} band")]
    WrongMarkers { side: Side, knee: u8, wrist: u8 },
}

/// Which sewn markers bound the instrumented segment of one band, and its rest length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGeometry {
    pub side: Side,
    pub l0_cm: f64,
    pub knee_marker_id: u8,
    pub wrist_marker_id: u8,
}

impl BandGeometry {
    pub fn new(side: Side, l0_cm: f64) -> Result<Self, BandForceError> {
        if !(l0_cm > 0.0 && l0_cm.is_finite()) {
            return Err(BandForceError::NonPositiveRestLength(l0_cm));
        }
        Ok(Self {
            side,
            l0_cm,
            knee_marker_id: side.band_knee(),
            wrist_marker_id: side.band_wrist(),
        })
    }

    fn check(&self) -> Result<(), BandForceError> {
        if self.knee_marker_id != self.side.band_knee() || self.wrist_marker_id != self.side.band_wrist() {
            return Err(BandForceError::WrongMarkers {
                side: self.side,
                knee: self.knee_marker_id,
                wrist: self.wrist_marker_id,
            });
        }
        if !(self.l0_cm > 0.0) {
            return Err(BandForceError::NonPositiveRestLength(self.l0_cm));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandForce {
    pub force_n: f64,
    /// The equivalent calibration displacement fell outside the fitted range.
    pub extrapolated: bool,
}

/// Evaluates the stiffness model for one band length.
pub fn band_force(cal: &BandCalibration, l0_cm: f64, length_cm: f64) -> Result<BandForce, BandForceError> {
    if !(l0_cm > 0.0 && l0_cm.is_finite()) {
        return Err(BandForceError::NonPositiveRestLength(l0_cm));
    }
    let stretch = (length_cm - l0_cm) / l0_cm;
    let equivalent_cm = cal.l_cal * stretch;
    let force = cal.k_cal * equivalent_cm + cal.f_i;
    Ok(BandForce {
        force_n: force.max(0.0),
        extrapolated: !cal.covers(equivalent_cm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandForceSample {
    pub t: f64,
    pub side: Side,
    pub length_cm: f64,
    pub delta_l_cm: f64,
    pub force_n: f64,
    /// Unit vector from the wrist-side marker toward the knee-side marker.
    pub direction: [f64; 3],
    pub extrapolated: bool,
}

fn band_markers(frame: &MarkerFrame, geom: &BandGeometry) -> Result<(Vec3, Vec3), BandForceError> {
    let knee = frame
        .get(geom.knee_marker_id)
        .ok_or(BandForceError::MissingMarker(geom.knee_marker_id))?;
    let wrist = frame
        .get(geom.wrist_marker_id)
        .ok_or(BandForceError::MissingMarker(geom.wrist_marker_id))?;
    Ok((knee, wrist))
}

/// Distance between the two sewn markers of a band, cm.
pub fn band_length_cm(frame: &MarkerFrame, geom: &BandGeometry) -> Result<f64, BandForceError> {
    let (knee, wrist) = band_markers(frame, geom)?;
    Ok((knee - wrist).norm() * 100.0)
}

/// Force magnitude and pull direction on the wrist for one band in one frame.
pub fn band_force_vector(
    frame: &MarkerFrame,
    geom: &BandGeometry,
    cal: &BandCalibration,
) -> Result<BandForceSample, BandForceError> {
    geom.check()?;
    let (knee, wrist) = band_markers(frame, geom)?;
    let span = knee - wrist;
    let length_m = span.norm();
    if length_m == 0.0 {
        return Err(BandForceError::DegenerateGeometry);
    }
    let direction = span / length_m;
    let length_cm = length_m * 100.0;
    let BandForce { force_n, extrapolated } = band_force(cal, geom.l0_cm, length_cm)?;
    Ok(BandForceSample {
        t: frame.t,
        side: geom.side,
        length_cm,
        delta_l_cm: length_cm - geom.l0_cm,
        force_n,
        direction: [direction.x, direction.y, direction.z],
        extrapolated,
    })
}

pub const MIN_REST_FRAMES: usize = 10;

/// Rest length of a band from a slack-pose window `[start, end]` seconds:
/// the median marker distance, which shrugs off occasional marker swaps.
pub fn estimate_rest_length(frames: &[MarkerFrame], side: Side, window: (f64, f64)) -> Result<f64, BandForceError> {
    let geom = BandGeometry {
        side,
        l0_cm: 1.0,
        knee_marker_id: side.band_knee(),
        wrist_marker_id: side.band_wrist(),
    };
    let mut lengths: Vec<f64> = frames
        .iter()
        .filter(|f| f.t >= window.0 && f.t <= window.1)
        .filter_map(|f| band_length_cm(f, &geom).ok())
        .collect();
    if lengths.len() < MIN_REST_FRAMES {
        return Err(BandForceError::InsufficientFrames {
            needed: MIN_REST_FRAMES,
            found: lengths.len(),
        });
    }
    lengths.sort_by(f64::total_cmp);
    Ok(median_sorted(&lengths))
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}
