//! Experiment runner for the `fednl` crate.
//!
//! A run is described by a TOML file (see [`config`]); the binary exposes
//! `run`, `reference`, `compare` and `selftest` subcommands on top of the
//! functions here.

pub mod config;
pub mod selftest;

use std::io::Write;
use std::path::{Path, PathBuf};

use fednl::{run, Reference, RunOptions, Trace, Vector};
use serde::{Deserialize, Serialize};

pub use config::{load_config, parse_config, BuiltProblem, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Runtime(#[from] fednl::Error),
    #[error("reference file {0} is missing; create it with `fednl reference`")]
    ReferenceMissing(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) | CliError::Check(_) => 3,
            CliError::ReferenceMissing(_) => 4,
            CliError::Io { .. } => 2,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    std::fs::write(path, contents).map_err(io_error(path))
}

/// Cached optimum written by `fednl reference`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReferenceFile {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
}

impl ReferenceFile {
    pub fn new(reference: &Reference, grad_norm: f64) -> Self {
        Self { x_star: reference.x_star.iter().copied().collect(), f_star: reference.f_star, grad_norm }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::ReferenceMissing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config { field: "reference.path".into(), message: e.to_string() })
    }

    pub fn into_reference(self) -> Reference {
        Reference { x_star: Vector::from_vec(self.x_star), f_star: self.f_star }
    }
}

/// JSON summary written next to each trace.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub method: String,
    pub rounds: usize,
    pub final_gap: f64,
    pub final_grad_norm: f64,
    pub final_dist_sq: f64,
    pub bits_up_total: f64,
    pub bits_down_total: f64,
    pub f_star: f64,
}

impl Summary {
    pub fn new(cfg: &RunConfig, trace: &Trace, reference: &Reference) -> Self {
        let last = trace.last().expect("a trace always has the initial record");
        Self {
            method: cfg.method.method.name().into(),
            rounds: last.round,
            final_gap: last.f_gap,
            final_grad_norm: last.grad_norm,
            final_dist_sq: last.dist_sq,
            bits_up_total: last.bits_up_cum,
            bits_down_total: last.bits_down_cum,
            f_star: reference.f_star,
        }
    }
}

/// Executes a config and returns its trace and summary without writing files.
pub fn execute(cfg: &RunConfig) -> Result<(Trace, Summary), CliError> {
    let built = cfg.build_problem()?;
    let problem = built.as_problem();
    cfg.validate_method(problem)?;
    let x0 = cfg.initial_point(problem)?;
    let reference = cfg.reference(problem)?;
    let opts = RunOptions { policy: cfg.bit_policy, lyapunov: cfg.lyapunov, wallclock: cfg.wallclock };
    let trace = run(&cfg.method, problem, &x0, &reference, &opts)?;
    let summary = Summary::new(cfg, &trace, &reference);
    Ok((trace, summary))
}

/// `fednl run`: writes the trace CSV and the summary JSON.
pub fn run_command(cfg: &RunConfig, trace_out: Option<&Path>, summary_out: Option<&Path>) -> Result<Summary, CliError> {
    let (trace, summary) = execute(cfg)?;
    let trace_path = trace_out.map(Path::to_path_buf).or_else(|| cfg.output.trace.clone());
    let trace_path = trace_path.unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.method.method.name())));
    write_file(&trace_path, trace.to_csv_string().as_bytes())?;
    let summary_path = summary_out.map(Path::to_path_buf).or_else(|| cfg.output.summary.clone());
    let summary_path = summary_path.unwrap_or_else(|| trace_path.with_extension("json"));
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&summary_path, json.as_bytes())?;
    Ok(summary)
}

/// `fednl reference`: 20 Newton steps from the origin, cached as JSON.
pub fn reference_command(cfg: &RunConfig, out: &Path) -> Result<ReferenceFile, CliError> {
    let built = cfg.build_problem()?;
    let problem = built.as_problem();
    let reference = Reference::newton(problem, 20)?;
    let file = ReferenceFile::new(&reference, problem.grad(&reference.x_star).norm());
    let json = serde_json::to_string_pretty(&file).expect("reference serializes");
    write_file(out, json.as_bytes())?;
    Ok(file)
}

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1e-4, 1e-8, 1e-10];

/// Cumulative bits per node when a trace first reaches a gap threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct BitsToGap {
    pub gap: f64,
    /// `(round, uplink bits, downlink bits)`, or `None` if never reached.
    pub reached: Option<(usize, f64, f64)>,
}

pub fn bits_to_gap(trace: &Trace, thresholds: &[f64]) -> Vec<BitsToGap> {
    thresholds
        .iter()
        .map(|&gap| BitsToGap {
            gap,
            reached: trace.first_reaching(gap).map(|r| (r.round, r.bits_up_cum, r.bits_down_cum)),
        })
        .collect()
}

/// `fednl compare`: a table of bits-to-gap for each trace file.
pub fn compare_command(files: &[PathBuf], thresholds: &[f64], mut out: impl Write) -> Result<(), CliError> {
    if files.len() < 2 {
        return Err(CliError::Config { field: "files".into(), message: "compare needs at least two traces".into() });
    }
    let stdout_err = |e| CliError::Io { path: PathBuf::from("<stdout>"), source: e };
    writeln!(out, "{:<40} {:>8} {:>8} {:>14} {:>14}", "trace", "gap", "round", "bits_up", "bits_down")
        .map_err(stdout_err)?;
    for file in files {
        let text = std::fs::read_to_string(file).map_err(io_error(file))?;
        let trace = Trace::read_csv(&text)?;
        for row in bits_to_gap(&trace, thresholds) {
            let name = file.display().to_string();
            match row.reached {
                Some((round, up, down)) => {
                    writeln!(out, "{name:<40} {:>8.0e} {round:>8} {up:>14.6e} {down:>14.6e}", row.gap)
                }
                None => writeln!(out, "{name:<40} {:>8.0e} {:>8} {:>14} {:>14}", row.gap, "-", "not reached", "-"),
            }
            .map_err(stdout_err)?;
        }
    }
    Ok(())
}
