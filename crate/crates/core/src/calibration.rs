//! Band stiffness calibration.
//!
//! Each band is pulled against a force gauge while its elongation is tracked.
//! A straight line `force = k_cal * displacement + f_i` is fitted per band by
//! ordinary least squares, and the left and right fits are averaged into the
//! single calibration both sides use during exercise.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self as fio, FormatError};
use crate::markers::Side;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fitted stiffness {slope} N/cm is not positive")]
    NegativeStiffness { slope: f64 },
    #[error("calibration samples mix left and right bands")]
    MixedSides,
    #[error("reference lengths differ: left {left} cm, right {right} cm")]
    MismatchedReferenceLength { left: f64, right: f64 },
    #[error("averaging needs one left and one right calibration")]
    SideMismatch,
    #[error("reference length must be positive, got {0} cm")]
    InvalidReferenceLength(f64),
    #[error("fitted initial force {intercept} N is negative")]
    NegativeInitialForce { intercept: f64 },
    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
}

/// One gauge reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub side: Side,
    /// Which of the four overlapping force intervals (1..=4).
    pub interval: u8,
    /// Pretension cycle (1..=3).
    pub cycle: u8,
    pub displacement_cm: f64,
    pub force_n: f64,
}

impl CalibrationSample {
    fn check(&self) -> Result<(), String> {
        if !(1..=4).contains(&self.interval) {
            return Err(format!("interval {} outside 1..=4", self.interval));
        }
        if !(1..=3).contains(&self.cycle) {
            return Err(format!("cycle {} outside 1..=3", self.cycle));
        }
        if !(self.displacement_cm >= 0.0 && self.displacement_cm.is_finite()) {
            return Err(format!(
                "displacement {} cm must be finite and >= 0",
                self.displacement_cm
            ));
        }
        if !(self.force_n >= 0.0 && self.force_n.is_finite()) {
            return Err(format!("force {} N must be finite and >= 0", self.force_n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationSide {
    Left,
    Right,
    Averaged,
}

impl CalibrationSide {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationSide::Left => "left",
            CalibrationSide::Right => "right",
            CalibrationSide::Averaged => "averaged",
        }
    }
}

impl From<Side> for CalibrationSide {
    fn from(side: Side) -> Self {
        match side {
            Side::Left => CalibrationSide::Left,
            Side::Right => CalibrationSide::Right,
        }
    }
}

impl std::str::FromStr for CalibrationSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(CalibrationSide::Left),
            "right" => Ok(CalibrationSide::Right),
            "averaged" => Ok(CalibrationSide::Averaged),
            other => Err(format!("unknown calibration side `{other}`")),
        }
    }
}

/// Fitted parameters of the modified stiffness model for one band or the averaged pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCalibration {
    /// Stiffness, N/cm.
    pub k_cal: f64,
    /// Initial force at zero displacement, N.
    pub f_i: f64,
    /// Segment length the calibration was measured over, cm.
    pub l_cal: f64,
    pub side: CalibrationSide,
    pub r_squared: f64,
    pub sample_count: usize,
    /// Smallest displacement seen while calibrating, cm.
    pub d_min_cm: f64,
    /// Largest displacement seen while calibrating, cm.
    pub d_max_cm: f64,
}

/// Reference length shipped with the default calibration. It is a stand-in:
/// forces only depend on the product `k_cal * l_cal`.
pub const DEFAULT_L_CAL_CM: f64 = 30.0;

impl BandCalibration {
    /// Average of the reported left (5.33 N/cm, 4.86 N) and right
    /// (5.61 N/cm, 3.03 N) band fits over a 0-10 cm range.
    pub fn default_averaged() -> Self {
        BandCalibration {
            k_cal: (5.33 + 5.61) / 2.0,
            f_i: (4.86 + 3.03) / 2.0,
            l_cal: DEFAULT_L_CAL_CM,
            side: CalibrationSide::Averaged,
            r_squared: 1.0,
            sample_count: 0,
            d_min_cm: 0.0,
            d_max_cm: 10.0,
        }
    }

    /// Whether an equivalent calibration-frame displacement lies inside the fitted range.
    pub fn covers(&self, displacement_cm: f64) -> bool {
        displacement_cm >= self.d_min_cm && displacement_cm <= self.d_max_cm
    }
}

/// Fits `force = k_cal * displacement + f_i` by ordinary least squares.
///
/// All samples must come from one band. Sums are taken about the sample means,
/// which keeps the fit well conditioned when displacements sit far from zero.
pub fn fit_band_calibration(samples: &[CalibrationSample], l_cal: f64) -> Result<BandCalibration, CalibrationError> {
    if !(l_cal > 0.0 && l_cal.is_finite()) {
        return Err(CalibrationError::InvalidReferenceLength(l_cal));
    }
    if samples.len() < 3 {
        return Err(CalibrationError::InsufficientData(format!(
            "{} samples, need at least 3",
            samples.len()
        )));
    }
    for (index, s) in samples.iter().enumerate() {
        s.check()
            .map_err(|reason| CalibrationError::InvalidSample { index, reason })?;
    }
    let side = samples[0].side;
    if samples.iter().any(|s| s.side != side) {
        return Err(CalibrationError::MixedSides);
    }

    let n = samples.len() as f64;
    let d_mean = samples.iter().map(|s| s.displacement_cm).sum::<f64>() / n;
    let f_mean = samples.iter().map(|s| s.force_n).sum::<f64>() / n;
    let (mut sdd, mut sdf, mut sff) = (0.0, 0.0, 0.0);
    for s in samples {
        let dd = s.displacement_cm - d_mean;
        let df = s.force_n - f_mean;
        sdd += dd * dd;
        sdf += dd * df;
        sff += df * df;
    }
    if sdd == 0.0 {
        return Err(CalibrationError::InsufficientData("all displacements are equal".into()));
    }
    let slope = sdf / sdd;
    if slope <= 0.0 || !slope.is_finite() {
        return Err(CalibrationError::NegativeStiffness { slope });
    }
    let intercept = f_mean - slope * d_mean;
    if intercept < 0.0 {
        return Err(CalibrationError::NegativeInitialForce { intercept });
    }
    let ss_res: f64 = samples
        .iter()
        .map(|s| {
            let r = s.force_n - (slope * s.displacement_cm + intercept);
            r * r
        })
        .sum();
    let r_squared = if sff > 0.0 {
        (1.0 - ss_res / sff).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let (d_min_cm, d_max_cm) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.displacement_cm), hi.max(s.displacement_cm))
    });

    Ok(BandCalibration {
        k_cal: slope,
        f_i: intercept,
        l_cal,
        side: side.into(),
        r_squared,
        sample_count: samples.len(),
        d_min_cm,
        d_max_cm,
    })
}

/// Mean of the left and right fits, used for both bands.
///
/// The displacement range of the result spans both inputs.
pub fn average_calibrations(a: &BandCalibration, b: &BandCalibration) -> Result<BandCalibration, CalibrationError> {
    let (left, right) = match (a.side, b.side) {
        (CalibrationSide::Left, CalibrationSide::Right) => (a, b),
        (CalibrationSide::Right, CalibrationSide::Left) => (b, a),
        _ => return Err(CalibrationError::SideMismatch),
    };
    if left.l_cal != right.l_cal {
        return Err(CalibrationError::MismatchedReferenceLength {
            left: left.l_cal,
            right: right.l_cal,
        });
    }
    Ok(BandCalibration {
        k_cal: (left.k_cal + right.k_cal) / 2.0,
        f_i: (left.f_i + right.f_i) / 2.0,
        l_cal: left.l_cal,
        side: CalibrationSide::Averaged,
        r_squared: left.r_squared.min(right.r_squared),
        sample_count: left.sample_count + right.sample_count,
        d_min_cm: left.d_min_cm.min(right.d_min_cm),
        d_max_cm: left.d_max_cm.max(right.d_max_cm),
    })
}

/// Keeps only samples from the last pretension cycle present for each band.
pub fn last_cycle_only(samples: &[CalibrationSample]) -> Vec<CalibrationSample> {
    let last = |side: Side| samples.iter().filter(|s| s.side == side).map(|s| s.cycle).max();
    let (l, r) = (last(Side::Left), last(Side::Right));
    samples
        .iter()
        .filter(|s| Some(s.cycle) == if s.side == Side::Left { l } else { r })
        .copied()
        .collect()
}

/// Fits each band present in `samples` and, when both are present, their average.
pub fn calibrate_bands(samples: &[CalibrationSample], l_cal: f64) -> Result<Vec<BandCalibration>, CalibrationError> {
    let mut fits = Vec::new();
    for side in Side::BOTH {
        let subset: Vec<_> = samples.iter().filter(|s| s.side == side).copied().collect();
        if !subset.is_empty() {
            fits.push(fit_band_calibration(&subset, l_cal)?);
        }
    }
    if fits.is_empty() {
        return Err(CalibrationError::InsufficientData("no samples".into()));
    }
    if fits.len() == 2 {
        let avg = average_calibrations(&fits[0], &fits[1])?;
        fits.push(avg);
    }
    Ok(fits)
}

/// Picks the calibration used for force estimation: an averaged record when
/// present, otherwise the average of a left/right pair, otherwise a lone record.
pub fn resolve_calibration(records: &[BandCalibration]) -> Result<BandCalibration, CalibrationError> {
    if let Some(avg) = records.iter().find(|c| c.side == CalibrationSide::Averaged) {
        return Ok(*avg);
    }
    let left = records.iter().find(|c| c.side == CalibrationSide::Left);
    let right = records.iter().find(|c| c.side == CalibrationSide::Right);
    match (left, right) {
        (Some(l), Some(r)) => average_calibrations(l, r),
        (Some(one), None) | (None, Some(one)) => Ok(*one),
        (None, None) => Err(CalibrationError::InsufficientData("no calibration records".into())),
    }
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

pub const SAMPLE_HEADER: [&str; 5] = ["side", "interval", "cycle", "displacement_cm", "force_n"];
pub const RECORD_HEADER: [&str; 8] = [
    "side",
    "k_cal_n_per_cm",
    "f_i_n",
    "l_cal_cm",
    "r_squared",
    "sample_count",
    "d_min_cm",
    "d_max_cm",
];

pub fn load_calibration_data(path: &Path) -> Result<Vec<CalibrationSample>, FormatError> {
    parse_calibration_data(fio::open(path)?)
}

pub fn parse_calibration_data<R: std::io::Read>(reader: R) -> Result<Vec<CalibrationSample>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| FormatError::parse(1, e.to_string()))?.clone();
    fio::expect_header(&header, &SAMPLE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FormatError::parse(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = fio::record_line(&rec);
        if rec.len() != SAMPLE_HEADER.len() {
            return Err(FormatError::parse(
                line,
                format!("expected 5 fields, found {}", rec.len()),
            ));
        }
        let side: Side = rec[0].trim().parse().map_err(|e: String| FormatError::parse(line, e))?;
        let sample = CalibrationSample {
            side,
            interval: fio::parse_int(&rec[1], line, "interval")?,
            cycle: fio::parse_int(&rec[2], line, "cycle")?,
            displacement_cm: fio::parse_f64(&rec[3], line, "displacement_cm")?,
            force_n: fio::parse_f64(&rec[4], line, "force_n")?,
        };
        sample.check().map_err(|m| FormatError::parse(line, m))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_calibration_data<W: Write>(w: &mut W, samples: &[CalibrationSample]) -> std::io::Result<()> {
    writeln!(w, "{}", SAMPLE_HEADER.join(","))?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.side, s.interval, s.cycle, s.displacement_cm, s.force_n
        )?;
    }
    Ok(())
}

/// Writes calibration records. Floats use the shortest decimal text that
/// parses back to the identical value.
pub fn save_calibration(path: &Path, records: &[BandCalibration]) -> Result<(), FormatError> {
    let mut w = fio::create(path)?;
    write_calibration_records(&mut w, records).map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn write_calibration_records<W: Write>(w: &mut W, records: &[BandCalibration]) -> std::io::Result<()> {
    writeln!(w, "{}", RECORD_HEADER.join(","))?;
    for c in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.side.as_str(),
            c.k_cal,
            c.f_i,
            c.l_cal,
            c.r_squared,
            c.sample_count,
            c.d_min_cm,
            c.d_max_cm
        )?;
    }
    Ok(())
}

pub fn load_calibration(path: &Path) -> Result<Vec<BandCalibration>, FormatError> {
    parse_calibration_records(fio::open(path)?)
}

/// Parses a record file. Lines starting with `#` are comments.
pub fn parse_calibration_records<R: BufRead>(reader: R) -> Result<Vec<BandCalibration>, FormatError> {
    let mut header_seen = false;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| FormatError::parse(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if !header_seen {
            if fields != RECORD_HEADER {
                return Err(FormatError::Schema(format!(
                    "expected header `{}`, found `{trimmed}`",
                    RECORD_HEADER.join(",")
                )));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != RECORD_HEADER.len() {
            return Err(FormatError::parse(
                lineno,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let side: CalibrationSide = fields[0].parse().map_err(|e: String| FormatError::parse(lineno, e))?;
        let cal = BandCalibration {
            side,
            k_cal: fio::parse_f64(fields[1], lineno, "k_cal_n_per_cm")?,
            f_i: fio::parse_f64(fields[2], lineno, "f_i_n")?,
            l_cal: fio::parse_f64(fields[3], lineno, "l_cal_cm")?,
            r_squared: fio::parse_f64(fields[4], lineno, "r_squared")?,
            sample_count: fio::parse_int(fields[5], lineno, "sample_count")?,
            d_min_cm: fio::parse_f64(fields[6], lineno, "d_min_cm")?,
            d_max_cm: fio::parse_f64(fields[7], lineno, "d_max_cm")?,
        };
        if !(cal.k_cal > 0.0 && cal.f_i >= 0.0 && cal.l_cal > 0.0 && (0.0..=1.0).contains(&cal.r_squared)) {
            return Err(FormatError::parse(lineno, "calibration values out of range"));
        }
        out.push(cal);
    }
    if !header_seen {
        return Err(FormatError::Schema("missing calibration header".into()));
    }
    Ok(out)
}
