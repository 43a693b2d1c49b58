//! Per-iteration solver records and their CSV form.

use std::path::Path;

use crate::error::{CmdpError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SolveRow {
    pub iter: usize,
    pub lambda: Vec<f64>,
    pub dual_value: f64,
    pub grad_norm: f64,
    pub max_violation: f64,
    pub soft_objective: f64,
    pub inner_iters: usize,
    /// Zero unless wall-clock recording is enabled.
    pub wall_ms: f64,
    /// Inexactness allowance from the certified inner log-error (not written to CSV).
    pub allowance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub num_constraints: usize,
    pub rows: Vec<SolveRow>,
    pub warnings: Vec<String>,
}

impl SolveTrace {
    pub fn new(num_constraints: usize) -> Self {
        SolveTrace { num_constraints, rows: Vec::new(), warnings: Vec::new() }
    }

    pub fn headers(&self) -> Vec<String> {
        let mut h = vec!["iter".to_string()];
        h.extend((0..self.num_constraints).map(|i| format!("lambda_{i}")));
        h.extend(
            ["dual_value", "grad_norm", "max_violation", "soft_objective", "inner_iters", "wall_ms"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.headers())?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string()];
            rec.extend(r.lambda.iter().map(|x| x.to_string()));
            rec.extend([
                r.dual_value.to_string(),
                r.grad_norm.to_string(),
                r.max_violation.to_string(),
                r.soft_objective.to_string(),
                r.inner_iters.to_string(),
                r.wall_ms.to_string(),
            ]);
            w.write_record(rec)?;
        }
        finish(w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv()?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectionRow {
    pub iter: usize,
    pub p: f64,
    pub q: f64,
    pub midpoint: f64,
    pub grad_estimate: f64,
    pub inner_iters: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BisectionTrace {
    pub rows: Vec<BisectionRow>,
}

impl BisectionTrace {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "p", "q", "midpoint", "grad_estimate", "inner_iters"])?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                r.p.to_string(),
                r.q.to_string(),
                r.midpoint.to_string(),
                r.grad_estimate.to_string(),
                r.inner_iters.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv()?)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CmdpError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CmdpError::Internal(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CmdpError::io(path, e))
}

/// Numeric CSV table read back for rate fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| if f.is_empty() { Ok(f64::NAN) } else { f.parse::<f64>() })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CmdpError::Config(format!("row {}: {e}", i + 2)))?;
            rows.push(row);
        }
        Ok(TraceTable { headers, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CmdpError::io(path, e))?;
        Self::from_csv_str(&text).map_err(|e| match e {
            CmdpError::Config(m) => CmdpError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Builds a table from an iteration column and one value column.
    pub fn from_columns(x_name: &str, xs: &[f64], y_name: &str, ys: &[f64]) -> Self {
        TraceTable {
            headers: vec![x_name.to_string(), y_name.to_string()],
            rows: xs.iter().zip(ys).map(|(x, y)| vec![*x, *y]).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CmdpError::Config(format!("no column named {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut t = SolveTrace::new(2);
        t.rows.push(SolveRow {
            iter: 0,
            lambda: vec![0.0, 1.5],
            dual_value: 3.25,
            grad_norm: 0.5,
            max_violation: 0.0,
            soft_objective: 2.0,
            inner_iters: 4,
            wall_ms: 0.0,
            allowance: 1e-9,
        });
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("iter,lambda_0,lambda_1,dual_value,grad_norm,max_violation,soft_objective,inner_iters,wall_ms\n"));
        let back = TraceTable::from_csv_str(&text).unwrap();
        assert_eq!(back.column("lambda_1").unwrap(), vec![1.5]);
        assert!(back.column("nope").is_err());
    }
}
