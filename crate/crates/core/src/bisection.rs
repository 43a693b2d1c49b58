//! Single-constraint dual bisection.

use serde::Serialize;

use crate::dual::{dual_value_and_gradient, Constants, DualEval, InnerBudget};
use crate::error::{CmdpError, Result};
use crate::model::{Policy, TabularCmdp};
use crate::npg::{npg_iteration_budget, q_gap_bound};
use crate::trace::{BisectionRow, BisectionTrace};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectionConfig {
    pub epsilon: f64,
    pub inner_budget_n1: usize,
    pub recover_budget_n2: usize,
    pub interval: (f64, f64),
    pub inner_stop_tol: Option<f64>,
    pub max_outer: usize,
}

impl BisectionConfig {
    /// Budgets from the constants: N₁ guarantees |∇̃D − ∇D| ≤ ε/2, N₂
    /// recovers the policy to log-accuracy `epsilon1`, interval [0, C₂].
    pub fn from_constants(
        model: &TabularCmdp,
        constants: &Constants,
        tau: f64,
        epsilon: f64,
        epsilon1: f64,
    ) -> Result<Self> {
        let (na, gamma) = (model.num_actions(), model.gamma());
        let qgap = q_gap_bound(constants.c2, tau, na, gamma);
        let n1 = npg_iteration_budget(qgap, epsilon * (1.0 - gamma).powi(2) / (2.0 * na as f64), tau, gamma)?;
        let n2 = npg_iteration_budget(qgap, epsilon1, tau, gamma)?;
        Ok(BisectionConfig {
            epsilon,
            inner_budget_n1: n1.max(1),
            recover_budget_n2: n2.max(1),
            interval: (0.0, constants.c2),
            inner_stop_tol: None,
            max_outer: outer_iteration_bound(constants.ell, constants.c2, epsilon),
        })
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(CmdpError::InvalidArgument("epsilon must be > 0".into()));
        }
        if !(self.interval.0 >= 0.0 && self.interval.0 < self.interval.1) {
            return Err(CmdpError::InvalidArgument(format!("interval {:?} must satisfy 0 <= lo < hi", self.interval)));
        }
        Ok(())
    }
}

/// ceil(log₂(ℓC₂/ε)).
pub fn outer_iteration_bound(ell: f64, c2: f64, epsilon: f64) -> usize {
    (ell * c2 / epsilon).log2().ceil().max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientBelowEpsilon,
    LowerEndpoint,
    UpperEndpoint,
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct BisectionResult {
    pub policy: Policy,
    pub lambda: f64,
    pub trace: BisectionTrace,
    pub outer_iters: usize,
    pub termination: Termination,
    /// Terminal interval [p, q].
    pub interval: (f64, f64),
    /// Evaluation at λ with the recovery budget.
    pub final_eval: DualEval,
}

fn require_single(model: &TabularCmdp) -> Result<()> {
    if model.num_constraints() != 1 {
        return Err(CmdpError::Config("bisection requires exactly one constraint".into()));
    }
    Ok(())
}

/// ∇̃D(λ) = U_g^{π̃_λ}(ρ) − b, returned with the inner policy for warm starts.
pub fn grad_sub(model: &TabularCmdp, lambda: f64, warm: &Policy, tau: f64, inner: &InnerBudget) -> Result<(f64, Policy)> {
    require_single(model)?;
    let ev = dual_value_and_gradient(model, &[lambda], tau, warm, inner)?;
    Ok((ev.gradient[0], ev.policy))
}

pub fn bisection_solve(model: &TabularCmdp, tau: f64, config: &BisectionConfig) -> Result<BisectionResult> {
    require_single(model)?;
    config.check()?;
    let inner = InnerBudget { max_iters: config.inner_budget_n1, stop_tol: config.inner_stop_tol };
    let recover = InnerBudget { max_iters: config.recover_budget_n2, stop_tol: config.inner_stop_tol };
    let (lo, hi) = config.interval;
    let mut trace = BisectionTrace::default();

    let at_lo = dual_value_and_gradient(model, &[lo], tau, &Policy::uniform(model.num_states(), model.num_actions()), &inner)?;
    let endpoint = |lambda: f64, warm: &Policy, term: Termination, trace: BisectionTrace| -> Result<BisectionResult> {
        let final_eval = dual_value_and_gradient(model, &[lambda], tau, warm, &recover)?;
        Ok(BisectionResult {
            policy: final_eval.policy.clone(),
            lambda,
            trace,
            outer_iters: 0,
            termination: term,
            interval: (lo, hi),
            final_eval,
        })
    };
    if at_lo.gradient[0] >= 0.0 {
        return endpoint(lo, &at_lo.policy, Termination::LowerEndpoint, trace);
    }
    let at_hi = dual_value_and_gradient(model, &[hi], tau, &at_lo.policy, &inner)?;
    if at_hi.gradient[0] <= 0.0 {
        return endpoint(hi, &at_hi.policy, Termination::UpperEndpoint, trace);
    }

    let (mut p, mut q) = (lo, hi);
    let mut warm = at_hi.policy;
    let mut lambda = 0.5 * (p + q);
    let mut termination = Termination::IterationCap;
    let mut outer = 0;
    for t in 0..config.max_outer.max(1) {
        let m = 0.5 * (p + q);
        let ev = dual_value_and_gradient(model, &[m], tau, &warm, &inner)?;
        warm = ev.policy;
        let g = ev.gradient[0];
        trace.rows.push(BisectionRow { iter: t, p, q, midpoint: m, grad_estimate: g, inner_iters: ev.inner_iters });
        outer = t + 1;
        lambda = m;
        if g.abs() < config.epsilon {
            termination = Termination::GradientBelowEpsilon;
            break;
        }
        if g > 0.0 {
            q = m;
        } else {
            p = m;
        }
    }
    if termination == Termination::IterationCap {
        log::warn!("bisection hit its iteration cap of {} without |grad| < {}", config.max_outer, config.epsilon);
    }
    let final_eval = dual_value_and_gradient(model, &[lambda], tau, &warm, &recover)?;
    Ok(BisectionResult {
        policy: final_eval.policy.clone(),
        lambda,
        trace,
        outer_iters: outer,
        termination,
        interval: (p, q),
        final_eval,
    })
}
