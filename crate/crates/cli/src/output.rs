//! Result rows and the files written for each run.
//!
//! `results.csv` columns: `experiment, quantity, lambda, value, method,
//! iterations, residual`. It is a pure function of config and seed. Wall
//! times go to `timings.csv` (`row, experiment, quantity, lambda,
//! wall_seconds`), joined to the results by row number.

use std::path::Path;
use std::time::Instant;

use oscint_core::normlab::{DecayFitResult, NormEstimate};
use serde::Serialize;

use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub quantity: String,
    pub lambda: Option<f64>,
    pub value: f64,
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TimingRow<'a> {
    row: usize,
    experiment: &'a str,
    quantity: &'a str,
    lambda: Option<f64>,
    wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub predicted: Option<f64>,
    pub log_factor: bool,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

/// A scalar compared against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=",
            bound,
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">=",
            bound,
            pass: value >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub id: String,
    pub seed: u64,
    pub converged: bool,
    pub passed: bool,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<Check>,
}

/// Collects rows, fits and checks during a run.
#[derive(Debug)]
pub struct Recorder {
    id: String,
    rows: Vec<Row>,
    times: Vec<f64>,
    last: Instant,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<Check>,
    pub converged: bool,
}

impl Recorder {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            rows: Vec::new(),
            times: Vec::new(),
            last: Instant::now(),
            fits: Vec::new(),
            checks: Vec::new(),
            converged: true,
        }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Adds a row; its wall time is the time since the previous row.
    pub fn push(
        &mut self,
        quantity: impl Into<String>,
        lambda: Option<f64>,
        value: f64,
        method: &str,
        iterations: usize,
        residual: f64,
    ) {
        let now = Instant::now();
        self.times.push((now - self.last).as_secs_f64());
        self.last = now;
        self.rows.push(Row {
            experiment: self.id.clone(),
            quantity: quantity.into(),
            lambda,
            value,
            method: method.to_string(),
            iterations,
            residual,
        });
    }

    pub fn push_estimate(&mut self, quantity: impl Into<String>, e: &NormEstimate) {
        if !e.converged {
            self.converged = false;
        }
        self.push(
            quantity,
            Some(e.lambda),
            e.value,
            e.method.as_str(),
            e.iterations,
            e.residual,
        );
    }

    /// Adds a fit with an optional target; `pass` is `|slope - target| <= tol`.
    pub fn push_fit(
        &mut self,
        label: impl Into<String>,
        fit: &DecayFitResult,
        predicted: Option<(f64, bool)>,
        target: Option<(f64, f64)>,
    ) {
        self.fits.push(FitSummary {
            label: label.into(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            predicted: predicted.map(|p| p.0),
            log_factor: predicted.is_some_and(|p| p.1),
            target: target.map(|t| t.0),
            tolerance: target.map(|t| t.1),
            pass: target.map(|(t, tol)| (fit.slope - t).abs() <= tol),
        });
    }

    pub fn summary(&self, experiment: &str, seed: u64) -> Summary {
        let passed = self.converged
            && self.checks.iter().all(|c| c.pass)
            && self.fits.iter().all(|f| f.pass != Some(false));
        Summary {
            experiment: experiment.to_string(),
            id: self.id.clone(),
            seed,
            converged: self.converged,
            passed,
            fits: self.fits.clone(),
            checks: self.checks.clone(),
        }
    }

    pub fn results_csv(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(RunError::io)?;
        }
        w.into_inner().map_err(|e| RunError::io(e.into_error()))
    }

    pub fn write(&self, dir: &Path, summary: &Summary) -> Result<(), RunError> {
        std::fs::create_dir_all(dir).map_err(RunError::io)?;
        std::fs::write(dir.join("results.csv"), self.results_csv()?).map_err(RunError::io)?;
        let mut t = csv::Writer::from_path(dir.join("timings.csv")).map_err(RunError::io)?;
        for (i, (r, s)) in self.rows.iter().zip(&self.times).enumerate() {
            t.serialize(TimingRow {
                row: i,
                experiment: &r.experiment,
                quantity: &r.quantity,
                lambda: r.lambda,
                wall_seconds: *s,
            })
            .map_err(RunError::io)?;
        }
        t.flush().map_err(RunError::io)?;
        let json = serde_json::to_string_pretty(summary).map_err(RunError::io)?;
        std::fs::write(dir.join("summary.json"), json + "\n").map_err(RunError::io)?;
        Ok(())
    }
}
