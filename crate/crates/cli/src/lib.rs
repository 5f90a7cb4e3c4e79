//! Experiment runner: loads a JSON config, runs one experiment and writes
//! `results.csv`, `timings.csv` and `summary.json`.
//!
//! Exit codes: 0 on success, 2 when the config fails validation, 3 when a
//! power iteration ends without converging, 1 for other failures and for a
//! selfcheck whose checks fail.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use config::{ExperimentConfig, ExperimentKind};
use output::{Recorder, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] oscint_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn config(msg: impl Into<String>) -> Self {
        RunError::Config(msg.into())
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        RunError::Io(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub recorder: Recorder,
    pub out_dir: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if !self.summary.converged {
            EXIT_NONCONVERGENCE
        } else if self.summary.experiment == ExperimentKind::Selfcheck.as_str()
            && !self.summary.passed
        {
            EXIT_FAILURE
        } else {
            EXIT_OK
        }
    }
}

/// Worker count from `OSCINT_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, RunError> {
    match std::env::var("OSCINT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(RunError::config(format!(
                "OSCINT_THREADS = {v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `cfg` on a pool of `threads` workers and writes the output files to
/// `out_dir`, or to the config's output path, or to `out/<id>`.
pub fn run(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    threads: Option<usize>,
) -> Result<Outcome, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(RunError::io)?;
    let recorder = pool.install(|| experiments::run(cfg))?;
    let summary = recorder.summary(cfg.experiment.as_str(), cfg.seed);
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.id()));
    recorder.write(&out_dir, &summary)?;
    Ok(Outcome {
        summary,
        recorder,
        out_dir,
    })
}
