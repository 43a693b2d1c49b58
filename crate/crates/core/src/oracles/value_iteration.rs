use crate::error::{CmdpError, Result};
use crate::eval::q_from_value;
use crate::model::{log_sum_exp, Policy, PolicyTable, QTable, SaTable, TabularCmdp, ValueTable};

pub const DEFAULT_VI_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SoftViOutcome {
    pub value: ValueTable,
    pub q: QTable,
    pub policy: Policy,
    pub iterations: usize,
    /// Sup-norm change of each backup.
    pub deltas: Vec<f64>,
}

fn stop_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / gamma
    }
}

fn check(tau: f64, tol: f64) -> Result<()> {
    if !(tau > 0.0) || !(tol > 0.0) {
        return Err(CmdpError::InvalidArgument(format!("soft value iteration needs tau > 0 and tol > 0 (got {tau}, {tol})")));
    }
    Ok(())
}

/// Iterates V ← τ log Σ_a exp((reward + γPV)/τ) until the change is at most
/// tol(1−γ)/γ, so that ‖V − V*‖∞ ≤ tol.
pub fn soft_value_iteration(model: &TabularCmdp, reward: &SaTable, tau: f64, tol: f64) -> Result<SoftViOutcome> {
    soft_value_iteration_from(model, reward, tau, tol, None)
}

pub fn soft_value_iteration_from(
    model: &TabularCmdp,
    reward: &SaTable,
    tau: f64,
    tol: f64,
    init: Option<&ValueTable>,
) -> Result<SoftViOutcome> {
    check(tau, tol)?;
    model.check_reward_shape(reward)?;
    let ns = model.num_states();
    let mut v = init.cloned().unwrap_or(ValueTable { v: vec![0.0; ns] });
    let threshold = stop_threshold(model.gamma(), tol);
    let mut deltas = Vec::new();
    let mut scaled = vec![0.0; model.num_actions()];
    loop {
        let q = q_from_value(model, reward, &v);
        let mut next = vec![0.0; ns];
        for (s, out) in next.iter_mut().enumerate() {
            for (x, qv) in scaled.iter_mut().zip(q.row(s)) {
                *x = qv / tau;
            }
            *out = tau * log_sum_exp(&scaled);
        }
        let delta = next.iter().zip(&v.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = ValueTable { v: next };
        deltas.push(delta);
        if delta <= threshold {
            break;
        }
    }
    let q = q_from_value(model, reward, &v);
    let logits = SaTable::from_fn(ns, model.num_actions(), |s, a| q.get(s, a) / tau);
    let policy = Policy::from_logits(logits)?;
    Ok(SoftViOutcome { value: v, q, policy, iterations: deltas.len(), deltas })
}

/// Hard-max value iteration; returns V* and a greedy deterministic policy
/// (lowest action index among ties).
pub fn value_iteration(model: &TabularCmdp, reward: &SaTable, tol: f64) -> Result<(ValueTable, PolicyTable)> {
    if !(tol > 0.0) {
        return Err(CmdpError::InvalidArgument("tol must be > 0".into()));
    }
    model.check_reward_shape(reward)?;
    let ns = model.num_states();
    let threshold = stop_threshold(model.gamma(), tol);
    let mut v = ValueTable { v: vec![0.0; ns] };
    loop {
        let q = q_from_value(model, reward, &v);
        let next: Vec<f64> = (0..ns).map(|s| q.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let delta = next.iter().zip(&v.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = ValueTable { v: next };
        if delta <= threshold {
            break;
        }
    }
    let q = q_from_value(model, reward, &v);
    let mut probs = SaTable::zeros(ns, model.num_actions());
    for s in 0..ns {
        let row = q.row(s);
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a = row.iter().position(|&x| x == best).unwrap_or(0);
        probs.set(s, a, 1.0);
    }
    Ok((v, PolicyTable::new(probs)?))
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
    fn soft_bandit_closed_form() {
        let m = bandit();
        let out = soft_value_iteration(&m, m.reward(), 1.0, DEFAULT_VI_TOL).unwrap();
        let e = std::f64::consts::E;
        assert!((out.value.v[0] - (e + 1.0).ln()).abs() < 1e-14);
        assert!((out.policy.prob(0, 0) - e / (1.0 + e)).abs() < 1e-14);
    }

    #[test]
    fn hard_bandit() {
        let m = bandit();
        let (v, p) = value_iteration(&m, m.reward(), 1e-12).unwrap();
        assert_eq!(v.v[0], 1.0);
        assert_eq!(crate::model::DecisionRule::probs(&p).row(0), &[1.0, 0.0]);
    }
}
