use crate::dual::DualBox;
use crate::error::{CmdpError, Result};
use crate::eval::lagrangian_reward;
use crate::model::{Policy, TabularCmdp, ValueTable};

use super::value_iteration::{soft_value_iteration_from, SoftViOutcome, DEFAULT_VI_TOL};

#[derive(Clone, Debug)]
pub struct GridCertificate {
    /// Final grid spacing per coordinate.
    pub spacing: Vec<f64>,
    /// (λ, D(λ)) at the axis neighbours of the minimizer on the final grid.
    pub neighbors: Vec<(Vec<f64>, f64)>,
    pub evaluations: usize,
    pub levels: usize,
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub lambda_star: Vec<f64>,
    pub d_star: f64,
    /// Soft-optimal policy for r_{λ*}.
    pub policy: Policy,
    pub certificate: GridCertificate,
}

/// D(λ) = max_π V_{λ,τ}^π(ρ) − λᵀb computed with soft value iteration.
pub fn dual_value_oracle(
    model: &TabularCmdp,
    lambda: &[f64],
    tau: f64,
    warm: Option<&ValueTable>,
) -> Result<(f64, SoftViOutcome)> {
    let r = lagrangian_reward(model, lambda)?;
    let out = soft_value_iteration_from(model, &r, tau, DEFAULT_VI_TOL, warm)?;
    let lb: f64 = lambda.iter().zip(model.thresholds()).map(|(l, b)| l * b).sum();
    Ok((out.value.at(model.initial_dist()) - lb, out))
}

fn points_per_axis(dims: usize) -> usize {
    if dims <= 1 {
        32
    } else {
        12
    }
}

/// Coarse-to-fine grid minimization of the convex dual over the box.
///
/// Each level evaluates a uniform grid over the current cell and zooms into
/// the cells adjacent to the minimizer; the final level has spacing at most
/// `resolution` in every coordinate.
pub fn dual_grid_search(model: &TabularCmdp, tau: f64, bx: &DualBox, resolution: f64) -> Result<GridResult> {
    let n = model.num_constraints();
    if n > 2 {
        return Err(CmdpError::InvalidArgument(format!("dual grid search supports n <= 2, got {n}")));
    }
    if bx.upper.len() != n {
        return Err(CmdpError::Shape("box dimension differs from constraint count".into()));
    }
    if !(resolution > 0.0) {
        return Err(CmdpError::InvalidArgument("resolution must be > 0".into()));
    }
    let k = points_per_axis(n);
    let mut lo = vec![0.0; n];
    let mut hi = bx.upper.clone();
    let mut warm: Option<ValueTable> = None;
    let mut evaluations = 0;
    let mut levels = 0;
    loop {
        levels += 1;
        let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / k as f64).collect();
        let counts: Vec<usize> = h.iter().map(|&hi| if hi > 0.0 { k + 1 } else { 1 }).collect();
        let total: usize = counts.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut best = (0usize, f64::INFINITY);
        for flat in 0..total {
            let idx = unflatten(flat, &counts);
            let lam: Vec<f64> = (0..n).map(|i| lo[i] + idx[i] as f64 * h[i]).collect();
            let (d, out) = dual_value_oracle(model, &lam, tau, warm.as_ref())?;
            warm = Some(out.value);
            evaluations += 1;
            if d < best.1 {
                best = (flat, d);
            }
            values.push(d);
        }
        let idx = unflatten(best.0, &counts);
        let lambda_star: Vec<f64> = (0..n).map(|i| lo[i] + idx[i] as f64 * h[i]).collect();
        if h.iter().all(|&x| x <= resolution) {
            let mut neighbors = Vec::new();
            for i in 0..n {
                for delta in [-1i64, 1] {
                    let j = idx[i] as i64 + delta;
                    if j < 0 || j >= counts[i] as i64 {
                        continue;
                    }
                    let mut nidx = idx.clone();
                    nidx[i] = j as usize;
                    let lam: Vec<f64> = (0..n).map(|c| lo[c] + nidx[c] as f64 * h[c]).collect();
                    neighbors.push((lam, values[flatten(&nidx, &counts)]));
                }
            }
            let (d_star, out) = dual_value_oracle(model, &lambda_star, tau, warm.as_ref())?;
            return Ok(GridResult {
                lambda_star,
                d_star,
                policy: out.policy,
                certificate: GridCertificate { spacing: h, neighbors, evaluations, levels },
            });
        }
        for i in 0..n {
            if h[i] > 0.0 {
                let a = idx[i].saturating_sub(1);
                let b = (idx[i] + 1).min(k);
                let base = lo[i];
                lo[i] = base + a as f64 * h[i];
                hi[i] = base + b as f64 * h[i];
            }
        }
    }
}

fn unflatten(mut flat: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for (i, &c) in counts.iter().enumerate().rev() {
        idx[i] = flat % c;
        flat /= c;
    }
    idx
}

fn flatten(idx: &[usize], counts: &[usize]) -> usize {
    idx.iter().zip(counts).fold(0, |acc, (&i, &c)| acc * c + i)
}
