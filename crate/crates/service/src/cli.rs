//! The `wrlab` command line.
//!
//! Exit codes: 1 for usage errors, 2 for unreadable or malformed input,
//! 3 for domain errors (a fit that fails, a session that cannot be analyzed).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use wrlab_core::analysis::{
    analyze_session, cohort_stats_from_dir, load_session_dir, write_analysis, write_session_dir, AnalysisError,
    MANIFEST_FILE,
};
use wrlab_core::calibration::{
    calibrate_bands, last_cycle_only, load_calibration, load_calibration_data, resolve_calibration, save_calibration,
    BandCalibration, CalibrationError, DEFAULT_L_CAL_CM,
};
use wrlab_core::io::{read_json, write_json, FormatError};
use wrlab_core::simulator::{synthesize, synthesize_session, SimError, SimulationSpec};
use wrlab_core::stats::DEFAULT_ALPHA;

pub const PORT_ENV: &str = "WRLAB_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(
    name = "wrlab",
    version,
    about = "Wearable-resistance band force, squat form and study statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit band calibrations from displacement/force samples.
    Calibrate {
        #[arg(long)]
        samples: PathBuf,
        /// Band segment length the samples were measured over, cm.
        #[arg(long, default_value_t = DEFAULT_L_CAL_CM)]
        lcal: f64,
        #[arg(long)]
        out: PathBuf,
        /// Fit only the last loading cycle of each band.
        #[arg(long)]
        last_cycle: bool,
    },
    /// Synthesize an exercise, a session or a cohort from a JSON spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a session directory, or every session directory below it.
    Analyze {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare training start-to-end changes across groups.
    Stats {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Run the live session service.
    Serve {
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Persist sessions as session directories here.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Domain(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Format(f) => f.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

/// Runs one command and returns a one-line summary for standard output.
pub fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Calibrate {
            samples,
            lcal,
            out,
            last_cycle,
        } => calibrate(&samples, lcal, &out, last_cycle),
        Command::Simulate { spec, out } => simulate(&spec, &out),
        Command::Analyze {
            session,
            calibration,
            report,
        } => analyze(&session, &calibration, &report),
        Command::Stats { cohort, report, alpha } => stats(&cohort, &report, alpha),
        Command::Serve { port, data_dir } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Domain(e.to_string()))?;
            rt.block_on(crate::server::serve(port, data_dir))
                .map_err(|e| CliError::Domain(format!("server: {e}")))?;
            Ok("server stopped".into())
        }
    }
}

fn calibrate(samples: &Path, lcal: f64, out: &Path, last_cycle: bool) -> Result<String, CliError> {
    let mut data = load_calibration_data(samples)?;
    if last_cycle {
        data = last_cycle_only(&data);
    }
    let fits = calibrate_bands(&data, lcal)?;
    save_calibration(out, &fits)?;
    let lines: Vec<String> = fits
        .iter()
        .map(|c| {
            format!(
                "{}: k_cal {:.4} N/cm, F_i {:.4} N, R² {:.4}",
                c.side.as_str(),
                c.k_cal,
                c.f_i,
                c.r_squared
            )
        })
        .collect();
    Ok(lines.join("\n"))
}

fn simulate(spec_path: &Path, out: &Path) -> Result<String, CliError> {
    let spec: SimulationSpec = read_json(spec_path)?;
    match spec {
        SimulationSpec::Exercise(e) => {
            let s = synthesize(&e)?;
            write_session_dir(out, &s)?;
            Ok(format!("wrote {} frames to {}", s.frames().count(), out.display()))
        }
        SimulationSpec::Session(spec) => {
            let s = synthesize_session(&spec)?;
            write_session_dir(out, &s)?;
            Ok(format!("wrote {} frames to {}", s.frames().count(), out.display()))
        }
        SimulationSpec::Cohort(c) => {
            for i in 0..c.subject_count() {
                let s = c.subject(i)?.synthesize()?;
                write_session_dir(&out.join(&s.manifest.subject_id), &s)?;
            }
            write_json(&out.join("cohort.json"), &c)?;
            Ok(format!("wrote {} sessions to {}", c.subject_count(), out.display()))
        }
    }
}

fn load_resolved_calibration(path: &Path) -> Result<BandCalibration, CliError> {
    Ok(resolve_calibration(&load_calibration(path)?)?)
}

/// Session directories to analyze: `dir` itself, or its immediate
/// subdirectories that hold a manifest, by name.
fn session_dirs(dir: &Path) -> Result<Vec<(Option<String>, PathBuf)>, CliError> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![(None, dir.to_path_buf())]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| FormatError::io(dir, e))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            let name = path
                .file_name()
                .expect("entry has a name")
                .to_string_lossy()
                .into_owned();
            out.push((Some(name), path));
        }
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "no {MANIFEST_FILE} in {} or its subdirectories",
            dir.display()
        )));
    }
    out.sort();
    Ok(out)
}

fn analyze(session: &Path, calibration: &Path, report: &Path) -> Result<String, CliError> {
    let cal = load_resolved_calibration(calibration)?;
    let dirs = session_dirs(session)?;
    let mut lines = Vec::new();
    for (name, dir) in &dirs {
        let (manifest, records) = load_session_dir(dir)?;
        let analysis = analyze_session(manifest, records, &cal)?;
        let out = match name {
            Some(n) => report.join(n),
            None => report.to_path_buf(),
        };
        write_analysis(&out, &analysis)?;
        let r = &analysis.report;
        let reps: usize = r.sets.iter().map(|s| s.reps).sum();
        lines.push(format!(
            "{}: {} sets, {} reps, {} deviations",
            r.subject_id,
            r.sets.len(),
            reps,
            r.deviations.len()
        ));
    }
    Ok(lines.join("\n"))
}

fn stats(cohort: &Path, report: &Path, alpha: f64) -> Result<String, CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let rep = cohort_stats_from_dir(cohort, alpha)?;
    write_json(report, &rep)?;
    let flagged: Vec<&str> = rep.flagged().iter().map(|m| m.as_str()).collect();
    let n: usize = rep.subjects.values().map(Vec::len).sum();
    Ok(format!(
        "{n} subjects; group differences at alpha {alpha}: {}",
        if flagged.is_empty() {
            "none".to_string()
        } else {
            flagged.join(", ")
        }
    ))
}
