use crate::error::{CmdpError, Result};
use crate::model::{PolicyTable, SaTable, TabularCmdp};

use super::simplex::{self, LinearProgram, LpOutcome};

/// Normalized discounted state-action occupancy.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    pub mu: SaTable,
}

impl OccupancyMeasure {
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.mu.num_states()).map(|s| self.mu.row(s).iter().sum()).collect()
    }

    /// Max absolute residual of the flow constraints.
    pub fn flow_residual(&self, model: &TabularCmdp) -> f64 {
        let ns = model.num_states();
        let mut inflow: Vec<f64> = model.initial_dist().iter().map(|p| (1.0 - model.gamma()) * p).collect();
        for s in 0..ns {
            for a in 0..model.num_actions() {
                let w = model.gamma() * self.mu.get(s, a);
                for (sp, t) in model.next_dist(s, a).iter().enumerate() {
                    inflow[sp] += w * t;
                }
            }
        }
        self.state_marginal().iter().zip(&inflow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Σ μ·table / (1−γ).
    pub fn value(&self, model: &TabularCmdp, table: &SaTable) -> f64 {
        self.mu.as_slice().iter().zip(table.as_slice()).map(|(m, r)| m * r).sum::<f64>() / (1.0 - model.gamma())
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub occupancy: OccupancyMeasure,
    pub policy: PolicyTable,
    pub value: f64,
}

const ZERO_MARGINAL: f64 = 1e-14;

/// Unregularized CMDP optimum via the occupancy-measure LP.
pub fn occupancy_lp_solve(model: &TabularCmdp) -> Result<LpSolution> {
    let (ns, na) = (model.num_states(), model.num_actions());
    let nx = ns * na;
    let gamma = model.gamma();
    let mut a_eq = vec![vec![0.0; nx]; ns];
    for s in 0..ns {
        for a in 0..na {
            let j = s * na + a;
            a_eq[s][j] += 1.0;
            for (sp, t) in model.next_dist(s, a).iter().enumerate() {
                a_eq[sp][j] -= gamma * t;
            }
        }
    }
    let b_eq = model.initial_dist().iter().map(|p| (1.0 - gamma) * p).collect();
    let a_ge = model.utilities().iter().map(|g| g.as_slice().to_vec()).collect();
    let b_ge = model.thresholds().iter().map(|b| (1.0 - gamma) * b).collect();
    let lp = LinearProgram { c: model.reward().as_slice().to_vec(), a_eq, b_eq, a_ge, b_ge };
    match simplex::solve(&lp) {
        LpOutcome::Optimal { x, .. } => {
            let mu = SaTable::from_flat(ns, na, x)?;
            let mut probs = SaTable::zeros(ns, na);
            for s in 0..ns {
                let m: f64 = mu.row(s).iter().sum();
                for a in 0..na {
                    probs.set(s, a, if m > ZERO_MARGINAL { mu.get(s, a) / m } else { 1.0 / na as f64 });
                }
                let sum: f64 = probs.row(s).iter().sum();
                for p in probs.row_mut(s) {
                    *p /= sum;
                }
            }
            let occupancy = OccupancyMeasure { mu };
            let value = occupancy.value(model, model.reward());
            Ok(LpSolution { occupancy, policy: PolicyTable::new(probs)?, value })
        }
        LpOutcome::Infeasible => Err(CmdpError::Infeasible("constraint thresholds cannot be met by any policy".into())),
        LpOutcome::Unbounded => Err(CmdpError::Internal("occupancy LP reported unbounded".into())),
        LpOutcome::Stalled => Err(CmdpError::Internal("simplex pivot limit reached".into())),
    }
}
