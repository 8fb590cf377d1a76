//! Summary JSON and plot-ready CSV files, with readers for each.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mirror_msa::solver::{read_trace_csv, write_trace_csv, TraceRow};
use mirror_msa::{IterateRecord, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::ExperimentError;

/// Outcome of one acceptance check. `worst` is the smallest slack or the
/// measured quantity, compared against `threshold`; it is absent when the
/// measurement was not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst: Option<f64>,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `worst >= threshold`.
    pub fn at_least(name: impl Into<String>, worst: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: worst >= threshold,
            worst: worst.is_finite().then_some(worst),
            threshold,
            detail: detail.into(),
        }
    }

    /// Passes when `worst <= threshold`.
    pub fn at_most(name: impl Into<String>, worst: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            passed: worst <= threshold,
            ..Self::at_least(name, worst, threshold, detail)
        }
    }

    pub fn failed(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: false,
            worst: None,
            threshold: 0.0,
            detail: detail.into(),
        }
    }
}

/// One solver run inside an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub tau: f64,
    pub lambda: f64,
    pub dim: usize,
    pub iterations: usize,
    pub termination: String,
    pub final_cost: Option<f64>,
    pub final_residual: Option<f64>,
    pub fitted_geometric_factor: Option<f64>,
    pub fitted_loglog_slope: Option<f64>,
    pub semilog_r_squared: Option<f64>,
    pub iterations_to_tolerance: Option<usize>,
    pub wall_time_s: f64,
    pub trace_file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ExperimentSummary {
    pub fn new(config: &ExperimentConfig, runs: Vec<RunSummary>, checks: Vec<CheckResult>) -> Self {
        let passed = checks.iter().all(|c| c.passed) && runs.iter().all(|r| r.error.is_none());
        Self {
            experiment: config.experiment.to_string(),
            config: config.clone(),
            runs,
            checks,
            passed,
        }
    }
}

pub fn write_summary(summary: &ExperimentSummary, path: &Path) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary, ExperimentError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Plot-ready row; the log columns are empty where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub n: usize,
    pub error: f64,
    pub log_n: Option<f64>,
    pub log_error: Option<f64>,
}

pub fn plot_rows(errors: &[f64]) -> Vec<PlotRow> {
    errors
        .iter()
        .enumerate()
        .map(|(n, &error)| PlotRow {
            n,
            error,
            log_n: (n > 0).then(|| (n as f64).ln()),
            log_error: (error > 0.0).then(|| error.ln()),
        })
        .collect()
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>, ExperimentError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(ExperimentError::from))
        .collect()
}

pub fn write_rows_file<T: Serialize>(rows: &[T], path: &Path) -> Result<(), ExperimentError> {
    write_rows(rows, BufWriter::new(File::create(path)?))
}

pub fn read_rows_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    read_rows(BufReader::new(File::open(path)?))
}

pub fn write_trace_file(records: &[IterateRecord], optimum: Option<f64>, path: &Path) -> Result<(), ExperimentError> {
    write_trace_csv(records, optimum, BufWriter::new(File::create(path)?))?;
    Ok(())
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>, ExperimentError> {
    Ok(read_trace_csv(BufReader::new(File::open(path)?))?)
}

pub fn write_trajectory_file(traj: &Trajectory, path: &Path) -> Result<(), ExperimentError> {
    traj.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(())
}

pub fn read_trajectory_file(path: &Path) -> Result<Trajectory, ExperimentError> {
    Ok(Trajectory::read_csv(BufReader::new(File::open(path)?))?)
}
