//! JSON report and plot-ready CSV exports of an inference run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use branchfit_core::inference::{Dataset, PipelineReport};
use serde::Serialize;
use serde_json::Value;

use crate::error::{AppError, Result};

pub const SCHEMA: &str = "branchfit-report/1";

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub path: String,
    pub mesh: f64,
    pub alpha: f64,
    pub delta_factor: f64,
    pub seed: u64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub path: String,
    pub n_data: usize,
    pub n_times: usize,
    pub grid_step: f64,
    pub t0: f64,
    pub units: String,
    pub count_mode: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub config: Value,
    pub dataset: DatasetSummary,
    pub grid: Option<GridSummary>,
    pub pipeline: PipelineReport,
    pub warnings: Vec<String>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn write_json(report: &Report, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| AppError::Input(e.to_string()))?;
    write(path, &(text + "\n"))
}

fn header(n: usize) -> String {
    let cols: Vec<String> = (0..n).map(|j| format!("traj_{j}")).collect();
    format!("time,{}\n", cols.join(","))
}

/// `ln N_t` per trajectory, one row per grid time.
pub fn log_counts_csv(ds: &Dataset) -> String {
    let mut s = header(ds.n_data());
    for i in 0..ds.n_times() {
        let _ = write!(s, "{}", ds.time(i));
        for (c, v) in ds.counts.iter().zip(&ds.valid) {
            if v[i] {
                let _ = write!(s, ",{}", c[i].ln());
            } else {
                s.push_str(",NA");
            }
        }
        s.push('\n');
    }
    s
}

/// Residuals `N_{t+δ} - e^{α̂δ} N_t` at the regime-detection step.
pub fn residuals_csv(ds: &Dataset, alpha_hat: f64, n_delta: usize) -> String {
    let growth = (alpha_hat * n_delta as f64 * ds.grid_step).exp();
    let mut s = header(ds.n_data());
    for i in 0..ds.n_times().saturating_sub(n_delta) {
        let _ = write!(s, "{}", ds.time(i));
        for (c, v) in ds.counts.iter().zip(&ds.valid) {
            if v[i] && v[i + n_delta] {
                let _ = write!(s, ",{}", c[i + n_delta] - growth * c[i]);
            } else {
                s.push_str(",NA");
            }
        }
        s.push('\n');
    }
    s
}

/// Variance curve with `½ ln Var` and the fitted line.
pub fn variance_csv(report: &PipelineReport) -> String {
    let c = &report.regime_curve;
    let l = &report.lambda;
    let mut s = String::from("time,variance,half_log_variance,fitted,n_used\n");
    for ((t, v), n) in c.times.iter().zip(&c.variances).zip(&c.n_used) {
        let _ = writeln!(s, "{t},{v},{},{},{n}", 0.5 * v.ln(), l.intercept + l.lambda_hat * t);
    }
    s
}

pub fn gaussian_csv(report: &PipelineReport) -> Option<String> {
    let c = report.gaussian_curve.as_ref()?;
    let mut s = String::from("time,variance,n_used\n");
    for ((t, v), n) in c.times.iter().zip(&c.variances).zip(&c.n_used) {
        let _ = writeln!(s, "{t},{v},{n}");
    }
    Some(s)
}

/// Write `report.json` and the CSV exports into `dir`.
pub fn write_all(report: &Report, ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    write_json(report, &dir.join("report.json"))?;
    let p = &report.pipeline;
    write(&dir.join("log_counts.csv"), &log_counts_csv(ds))?;
    let n1 = p.regime_curve.n_delta;
    write(&dir.join("residuals.csv"), &residuals_csv(ds, p.alpha.alpha_hat, n1))?;
    write(&dir.join("variance.csv"), &variance_csv(p))?;
    if let Some(g) = gaussian_csv(p) {
        write(&dir.join("gaussian_variance.csv"), &g)?;
    }
    Ok(())
}
