use serde::{Deserialize, Serialize};

use crate::error::{CmdpError, Result};
use crate::trace::TraceTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// log(value) against log(iter).
    Power,
    /// log(value) against iter.
    LinearLog,
}

impl std::str::FromStr for RateModel {
    type Err = CmdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(RateModel::Power),
            "linear-log" => Ok(RateModel::LinearLog),
            other => Err(CmdpError::Config(format!("unknown rate model {other:?} (power | linear-log)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub min_rows: usize,
    /// Rows with values at or below the floor are dropped (e.g. once an
    /// error sequence hits round-off).
    pub floor: f64,
    pub x_column: String,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { min_rows: 10, floor: 0.0, x_column: "iter".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub slope_stderr: f64,
    /// slope ± 1.96·stderr.
    pub ci95: (f64, f64),
    pub rows_used: usize,
}

pub fn fit_rate(trace: &TraceTable, column: &str, model: RateModel) -> Result<FitResult> {
    fit_rate_with(trace, column, model, &FitOptions::default())
}

/// Least-squares slope of log(value) against log(iter) or iter.
pub fn fit_rate_with(trace: &TraceTable, column: &str, model: RateModel, opts: &FitOptions) -> Result<FitResult> {
    let ys = trace.column(column)?;
    let xs = trace.column(&opts.x_column)?;
    if ys.iter().all(|y| *y == 0.0) {
        return Err(CmdpError::Config(format!("column {column:?} is identically zero")));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(&ys)
        .filter(|(x, y)| y.is_finite() && **y > opts.floor && **y > 0.0 && x.is_finite())
        .filter(|(x, _)| model == RateModel::LinearLog || **x > 0.0)
        .map(|(x, y)| (if model == RateModel::Power { x.ln() } else { *x }, y.ln()))
        .collect();
    if pts.len() < opts.min_rows.max(2) {
        return Err(CmdpError::Config(format!(
            "column {column:?} has {} usable rows, need {}",
            pts.len(),
            opts.min_rows.max(2)
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CmdpError::Config("all usable rows share the same iteration".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let residual = (sse / n).sqrt();
    let slope_stderr = if pts.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(FitResult {
        slope,
        intercept,
        residual,
        slope_stderr,
        ci95: (slope - 1.96 * slope_stderr, slope + 1.96 * slope_stderr),
        rows_used: pts.len(),
    })
}
