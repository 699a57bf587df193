//! Text formats shared by the pipeline: the long marker-frame CSV, JSON
//! documents, and the error type every file reader reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markers::{is_valid_id, FrameRecord, MarkerFrame, Vec3};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| FormatError::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let reader = open(path)?;
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// Checks a CSV header against the exact expected column list.
pub(crate) fn expect_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), FormatError> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(FormatError::Schema(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

pub(crate) fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

pub(crate) fn parse_f64(field: &str, line: u64, name: &str) -> Result<f64, FormatError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| FormatError::parse(line, format!("`{name}` is not a number: `{field}`")))?;
    if !v.is_finite() {
        return Err(FormatError::parse(line, format!("`{name}` is not finite")));
    }
    Ok(v)
}

pub(crate) fn parse_int<T: std::str::FromStr>(field: &str, line: u64, name: &str) -> Result<T, FormatError> {
    field
        .trim()
        .parse()
        .map_err(|_| FormatError::parse(line, format!("`{name}` is not an integer: `{field}`")))
}

// ---------------------------------------------------------------------------
// Marker frame CSV
// ---------------------------------------------------------------------------

pub const FRAME_HEADER: [&str; 7] = ["time_s", "seq", "marker_id", "x_m", "y_m", "z_m", "valid"];
pub const SET_END_TOKEN: &str = "SET_END";

/// One row of the long frame format, also the JSON shape the service accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub time_s: f64,
    pub seq: u64,
    pub marker_id: u8,
    #[serde(default)]
    pub x_m: Option<f64>,
    #[serde(default)]
    pub y_m: Option<f64>,
    #[serde(default)]
    pub z_m: Option<f64>,
    pub valid: bool,
}

/// Groups rows into frames. Rows of one frame must be contiguous, and frame
/// sequence numbers must strictly increase.
#[derive(Debug, Default)]
pub struct FrameAssembler {
    current: Option<MarkerFrame>,
    seen: [bool; 20],
    last_seq: Option<u64>,
}

impl FrameAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Feeds one marker row; returns a completed frame when the row starts a new one.
    pub fn push_row(&mut self, row: &FrameRow, line: u64) -> Result<Option<MarkerFrame>, FormatError> {
        validate_row(row).map_err(|m| FormatError::parse(line, m))?;
        let mut finished = None;
        match &self.current {
            Some(frame) if frame.seq == row.seq => {
                if frame.t != row.time_s {
                    return Err(FormatError::parse(line, "rows of one frame disagree on time_s"));
                }
            }
            _ => {
                self.check_next_seq(row.seq, line)?;
                finished = self.current.take();
                self.current = Some(MarkerFrame::new(row.time_s, row.seq));
                self.seen = [false; 20];
                self.last_seq = Some(row.seq);
            }
        }
        let idx = row.marker_id as usize - 1;
        if self.seen[idx] {
            return Err(FormatError::parse(
                line,
                format!("marker {} repeated in frame {}", row.marker_id, row.seq),
            ));
        }
        self.seen[idx] = true;
        if row.valid {
            let frame = self.current.as_mut().expect("frame just opened");
            frame.set(
                row.marker_id,
                Vec3::new(row.x_m.unwrap_or(0.0), row.y_m.unwrap_or(0.0), row.z_m.unwrap_or(0.0)),
            );
        }
        Ok(finished)
    }

    /// Feeds a set-end control row; returns the frame it closes, if any.
    pub fn push_set_end(&mut self, seq: u64, line: u64) -> Result<Option<MarkerFrame>, FormatError> {
        self.check_next_seq(seq, line)?;
        self.last_seq = Some(seq);
        Ok(self.current.take())
    }

    pub fn finish(&mut self) -> Option<MarkerFrame> {
        self.current.take()
    }

    fn check_next_seq(&self, seq: u64, line: u64) -> Result<(), FormatError> {
        match self.last_seq {
            Some(last) if seq <= last => Err(FormatError::parse(line, format!("seq {seq} does not follow {last}"))),
            _ => Ok(()),
        }
    }
}

pub fn validate_row(row: &FrameRow) -> Result<(), String> {
    if !is_valid_id(row.marker_id) {
        return Err(format!("marker_id {} outside 1..=20", row.marker_id));
    }
    if !row.time_s.is_finite() || row.time_s < 0.0 {
        return Err(format!("time_s {} must be finite and non-negative", row.time_s));
    }
    if row.valid {
        match (row.x_m, row.y_m, row.z_m) {
            (Some(x), Some(y), Some(z)) if x.is_finite() && y.is_finite() && z.is_finite() => {}
            _ => return Err(format!("valid marker {} needs finite x/y/z", row.marker_id)),
        }
    }
    Ok(())
}

/// Flattens a frame into one row per marker.
pub fn frame_rows(frame: &MarkerFrame) -> Vec<FrameRow> {
    MarkerFrame::ids()
        .map(|id| {
            let p = frame.get(id);
            FrameRow {
                time_s: frame.t,
                seq: frame.seq,
                marker_id: id,
                x_m: p.map(|p| p.x),
                y_m: p.map(|p| p.y),
                z_m: p.map(|p| p.z),
                valid: p.is_some(),
            }
        })
        .collect()
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<FrameRecord>, FormatError> {
    parse_frames_csv(open(path)?)
}

pub fn parse_frames_csv<R: Read>(reader: R) -> Result<Vec<FrameRecord>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| FormatError::parse(1, e.to_string()))?.clone();
    expect_header(&header, &FRAME_HEADER)?;

    let mut out = Vec::new();
    let mut asm = FrameAssembler::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(FormatError::parse(line, e.to_string()));
            }
        }
        let line = record_line(&record);
        if record.len() != FRAME_HEADER.len() {
            return Err(FormatError::parse(
                line,
                format!("expected {} fields, found {}", FRAME_HEADER.len(), record.len()),
            ));
        }
        let time_s = parse_f64(&record[0], line, "time_s")?;
        let seq: u64 = parse_int(&record[1], line, "seq")?;
        if record[2].trim() == SET_END_TOKEN {
            if let Some(frame) = asm.push_set_end(seq, line)? {
                out.push(FrameRecord::Frame(frame));
            }
            out.push(FrameRecord::SetEnd { t: time_s, seq });
            continue;
        }
        let marker_id: u8 = parse_int(&record[2], line, "marker_id")?;
        let valid = match record[6].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(FormatError::parse(
                    line,
                    format!("`valid` must be 0/1, found `{other}`"),
                ))
            }
        };
        let coord = |i: usize, name: &str| -> Result<Option<f64>, FormatError> {
            let s = record[i].trim();
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, line, name).map(Some)
            }
        };
        let row = FrameRow {
            time_s,
            seq,
            marker_id,
            x_m: coord(3, "x_m")?,
            y_m: coord(4, "y_m")?,
            z_m: coord(5, "z_m")?,
            valid,
        };
        if let Some(frame) = asm.push_row(&row, line)? {
            out.push(FrameRecord::Frame(frame));
        }
    }
    if let Some(frame) = asm.finish() {
        out.push(FrameRecord::Frame(frame));
    }
    Ok(out)
}

pub fn write_frames_csv(path: &Path, records: &[FrameRecord]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    write_frames(&mut w, records).map_err(|e| FormatError::io(path, e))?;
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn write_frames<W: Write>(w: &mut W, records: &[FrameRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", FRAME_HEADER.join(","))?;
    append_frames(w, records)
}

/// Writes records without the header, for appending to an open file.
pub fn append_frames<W: Write + ?Sized>(w: &mut W, records: &[FrameRecord]) -> std::io::Result<()> {
    for record in records {
        match record {
            FrameRecord::Frame(frame) => {
                for id in MarkerFrame::ids() {
                    match frame.get(id) {
                        Some(p) => writeln!(w, "{},{},{},{},{},{},1", frame.t, frame.seq, id, p.x, p.y, p.z)?,
                        None => writeln!(w, "{},{},{},,,,0", frame.t, frame.seq, id)?,
                    }
                }
            }
            FrameRecord::SetEnd { t, seq } => writeln!(w, "{t},{seq},{SET_END_TOKEN},,,,")?,
        }
    }
    Ok(())
}
