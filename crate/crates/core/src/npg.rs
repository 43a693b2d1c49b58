//! Entropy-regularized natural policy gradient with the closed-form
//! soft-max update.

use std::fmt::Write as _;

use crate::error::{CmdpError, Result};
use crate::eval::{entropy_augmented_reward, lagrangian_reward, q_from_value, PolicyEvaluator};
use crate::model::{log_sum_exp, Policy, QTable, SaTable, TabularCmdp};

#[derive(Clone, Debug, PartialEq)]
pub struct NpgConfig {
    pub tau: f64,
    /// `None` means the largest admissible step (1−γ)/τ.
    pub eta: Option<f64>,
    pub max_iters: usize,
    pub stop_tol: Option<f64>,
}

impl NpgConfig {
    pub fn new(tau: f64, max_iters: usize) -> Self {
        NpgConfig { tau, eta: None, max_iters, stop_tol: None }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_stop_tol(mut self, tol: f64) -> Self {
        self.stop_tol = Some(tol);
        self
    }

    pub fn resolved_eta(&self, gamma: f64) -> Result<f64> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(CmdpError::InvalidArgument(format!("tau = {} must be > 0", self.tau)));
        }
        let max = (1.0 - gamma) / self.tau;
        match self.eta {
            None => Ok(max),
            Some(eta) if eta > 0.0 && eta <= max * (1.0 + 1e-12) => Ok(eta.min(max)),
            Some(eta) => Err(CmdpError::InvalidArgument(format!("eta = {eta} outside (0, (1-gamma)/tau = {max}]"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpgRecord {
    pub iter: usize,
    /// V_{λ,τ}^{π_t}(ρ) of the policy the step started from.
    pub soft_value: f64,
    /// ‖log π_{t+1} − log π_t‖∞.
    pub log_change: f64,
    /// ‖log π* − log π_{t+1}‖∞ when a reference optimum is supplied.
    pub oracle_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NpgTrace {
    pub records: Vec<NpgRecord>,
    pub warnings: Vec<String>,
}

impl NpgTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,soft_value,log_change,oracle_error\n");
        for r in &self.records {
            let err = r.oracle_error.map(|e| format!("{e:e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{:e},{}", r.iter, r.soft_value, r.log_change, err);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct NpgOutcome {
    pub policy: Policy,
    pub trace: NpgTrace,
    /// Certified bound on ‖log π − log π_λ‖∞ (only for η = (1−γ)/τ after ≥ 1 step).
    pub certified_log_error: Option<f64>,
}

impl NpgOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }
}

/// Soft value at ρ and soft Q of `policy` under `reward`.
fn soft_eval(model: &TabularCmdp, policy: &Policy, reward: &SaTable, tau: f64) -> Result<(f64, QTable)> {
    let ev = PolicyEvaluator::new(model, policy)?;
    let v = ev.value(&entropy_augmented_reward(reward, policy, tau))?;
    Ok((v.at(model.initial_dist()), q_from_value(model, reward, &v)))
}

fn update(policy: &Policy, q: &QTable, tau: f64, eta: f64, gamma: f64) -> Result<Policy> {
    let keep = 1.0 - eta * tau / (1.0 - gamma);
    let gain = eta / (1.0 - gamma);
    let lp = policy.log_probs();
    let mut logits = SaTable::from_fn(lp.num_states(), lp.num_actions(), |s, a| {
        let base = if keep == 0.0 { 0.0 } else { keep * lp.get(s, a) };
        base + gain * q.get(s, a)
    });
    for s in 0..logits.num_states() {
        let row = logits.row_mut(s);
        let z = log_sum_exp(row);
        for x in row.iter_mut() {
            *x -= z;
        }
    }
    Policy::from_logits(logits)
}

fn check_shapes(model: &TabularCmdp, policy: &Policy) -> Result<()> {
    if (policy.num_states(), policy.num_actions()) != (model.num_states(), model.num_actions()) {
        return Err(CmdpError::Shape("policy shape differs from model".into()));
    }
    Ok(())
}

/// One update log π′ = (1 − ητ/(1−γ)) log π + (η/(1−γ)) Q_{λ,τ}^π − log Z.
pub fn npg_step(model: &TabularCmdp, policy: &Policy, lambda: &[f64], config: &NpgConfig) -> Result<Policy> {
    check_shapes(model, policy)?;
    let eta = config.resolved_eta(model.gamma())?;
    let r = lagrangian_reward(model, lambda)?;
    let (_, q) = soft_eval(model, policy, &r, config.tau)?;
    update(policy, &q, config.tau, eta, model.gamma())
}

pub fn npg_run(model: &TabularCmdp, init: &Policy, lambda: &[f64], config: &NpgConfig) -> Result<(Policy, NpgTrace)> {
    let out = npg_solve(model, init, lambda, config, None)?;
    Ok((out.policy, out.trace))
}

/// Runs up to `max_iters` steps (or until the log-policy change drops below
/// `stop_tol`), optionally tracking the error against a reference optimum.
pub fn npg_solve(
    model: &TabularCmdp,
    init: &Policy,
    lambda: &[f64],
    config: &NpgConfig,
    reference: Option<&Policy>,
) -> Result<NpgOutcome> {
    let r = lagrangian_reward(model, lambda)?;
    npg_solve_with_reward(model, init, &r, config, reference)
}

/// As [`npg_solve`] with an explicit per-pair reward in place of r_λ.
pub fn npg_solve_with_reward(
    model: &TabularCmdp,
    init: &Policy,
    reward: &SaTable,
    config: &NpgConfig,
    reference: Option<&Policy>,
) -> Result<NpgOutcome> {
    check_shapes(model, init)?;
    model.check_reward_shape(reward)?;
    let gamma = model.gamma();
    let tau = config.tau;
    let eta = config.resolved_eta(gamma)?;
    let r = reward;
    let mut policy = init.clone();
    let mut trace = NpgTrace::default();
    let mut last_q: Option<QTable> = None;
    let mut last_value = f64::NEG_INFINITY;
    for t in 0..config.max_iters {
        let (value, q) = soft_eval(model, &policy, r, tau)?;
        if value < last_value - 1e-12 {
            let msg = format!("soft value decreased at iteration {t}: {last_value} -> {value}");
            log::warn!("{msg}");
            trace.warnings.push(msg);
        }
        last_value = value;
        let next = update(&policy, &q, tau, eta, gamma)?;
        let log_change = next.log_distance(&policy);
        trace.records.push(NpgRecord {
            iter: t,
            soft_value: value,
            log_change,
            oracle_error: reference.map(|p| p.log_distance(&next)),
        });
        policy = next;
        last_q = Some(q);
        if config.stop_tol.is_some_and(|tol| log_change < tol) {
            break;
        }
    }
    let exact_step = (eta - (1.0 - gamma) / tau).abs() <= 1e-12 * eta;
    let certified_log_error = match (&last_q, exact_step) {
        (Some(prev), true) => {
            let (_, q) = soft_eval(model, &policy, r, tau)?;
            Some(2.0 * q.max_abs_diff(prev) / ((1.0 - gamma) * tau))
        }
        _ => None,
    };
    Ok(NpgOutcome { policy, trace, certified_log_error })
}

/// ceil((1/(1−γ))·log(2·q_gap/(ε·τ))), clamped at zero.
pub fn npg_iteration_budget(q_gap_bound: f64, epsilon: f64, tau: f64, gamma: f64) -> Result<usize> {
    if !(q_gap_bound > 0.0 && epsilon > 0.0 && tau > 0.0) || !(0.0..1.0).contains(&gamma) {
        return Err(CmdpError::InvalidArgument(format!(
            "budget needs positive q_gap, epsilon, tau and gamma in [0,1) (got {q_gap_bound}, {epsilon}, {tau}, {gamma})"
        )));
    }
    let n = (2.0 * q_gap_bound / (epsilon * tau)).ln() / (1.0 - gamma);
    if !n.is_finite() {
        return Err(CmdpError::InvalidArgument("iteration budget is not finite".into()));
    }
    Ok(n.ceil().max(0.0) as usize)
}

/// Computable bound (1 + C₂ + τ log|A|)/(1−γ) on ‖Q*_τ − Q_τ^{π₀}‖∞.
pub fn q_gap_bound(c2: f64, tau: f64, num_actions: usize, gamma: f64) -> f64 {
    (1.0 + c2 + tau * (num_actions as f64).ln()) / (1.0 - gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmdpData;

    fn bandit() -> TabularCmdp {
        TabularCmdp::from_data(CmdpData {
            num_states: 1,
            num_actions: 2,
            gamma: 0.0,
            transition: vec![vec![vec![1.0], vec![1.0]]],
            reward: vec![vec![1.0, 0.0]],
            utilities: vec![],
            thresholds: vec![],
            initial_dist: vec![1.0],
        })
        .unwrap()
    }

    #[test]
    fn bandit_one_step() {
        let m = bandit();
        let p = npg_step(&m, &Policy::uniform(1, 2), &[], &NpgConfig::new(1.0, 1).with_eta(1.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((p.prob(0, 0) - e / (1.0 + e)).abs() < 1e-15);
        assert!((p.prob(0, 1) - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn zero_iters_returns_init() {
        let m = bandit();
        let init = Policy::from_probs(SaTable::from_rows(&[vec![0.2, 0.8]]).unwrap()).unwrap();
        let (p, tr) = npg_run(&m, &init, &[], &NpgConfig::new(1.0, 0)).unwrap();
        assert_eq!(p, init);
        assert!(tr.records.is_empty());
    }

    #[test]
    fn eta_range_enforced() {
        let cfg = NpgConfig::new(0.1, 1).with_eta(2.0);
        assert!(cfg.resolved_eta(0.9).is_err());
        assert_eq!(NpgConfig::new(0.1, 1).resolved_eta(0.9).unwrap(), (1.0 - 0.9) / 0.1);
    }

    #[test]
    fn budget_reference_example() {
        assert_eq!(npg_iteration_budget(10.0, 1e-6, 0.1, 0.9).unwrap(), 192);
        // log argument 1
        assert_eq!(npg_iteration_budget(0.5, 1.0, 1.0, 0.5).unwrap(), 0);
        assert!(npg_iteration_budget(0.0, 1.0, 1.0, 0.5).is_err());
    }
}
