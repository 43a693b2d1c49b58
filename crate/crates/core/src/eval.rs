//! Exact policy evaluation by dense LU solves of (I − γP_π)x = y.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{CmdpError, Result};
use crate::model::{DecisionRule, Policy, QTable, SaTable, TabularCmdp, ValueTable, VisitationDistribution};

/// Cached factorization of (I − γP_π) for one decision rule.
pub struct PolicyEvaluator<'m> {
    model: &'m TabularCmdp,
    probs: SaTable,
    lu: LU<f64, Dyn, Dyn>,
}

impl<'m> PolicyEvaluator<'m> {
    pub fn new<P: DecisionRule + ?Sized>(model: &'m TabularCmdp, policy: &P) -> Result<Self> {
        let probs = policy.probs();
        model.check_reward_shape(probs)?;
        let ns = model.num_states();
        let gamma = model.gamma();
        let mut m = DMatrix::<f64>::identity(ns, ns);
        for s in 0..ns {
            for (a, &p) in probs.row(s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (sp, &t) in model.next_dist(s, a).iter().enumerate() {
                    m[(s, sp)] -= gamma * p * t;
                }
            }
        }
        Ok(PolicyEvaluator { model, probs: probs.clone(), lu: m.lu() })
    }

    pub fn model(&self) -> &TabularCmdp {
        self.model
    }

    fn solve(&self, rhs: DVector<f64>) -> Result<Vec<f64>> {
        let x = self.lu.solve(&rhs).ok_or(CmdpError::Singular)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CmdpError::Singular);
        }
        Ok(x.iter().copied().collect())
    }

    /// V solving V = r_π + γP_πV for a per-pair reward.
    pub fn value(&self, reward: &SaTable) -> Result<ValueTable> {
        self.model.check_reward_shape(reward)?;
        let ns = self.model.num_states();
        let rhs = DVector::from_fn(ns, |s, _| {
            self.probs.row(s).iter().zip(reward.row(s)).map(|(p, r)| if *p == 0.0 { 0.0 } else { p * r }).sum()
        });
        Ok(ValueTable { v: self.solve(rhs)? })
    }

    pub fn q(&self, reward: &SaTable) -> Result<QTable> {
        let v = self.value(reward)?;
        Ok(q_from_value(self.model, reward, &v))
    }

    pub fn visitation(&self) -> Result<VisitationDistribution> {
        let ns = self.model.num_states();
        let gamma = self.model.gamma();
        // dᵀ(I − γP_π) = (1−γ)ρᵀ  ⇔  (I − γP_π)ᵀ d = (1−γ)ρ
        let mut mt = DMatrix::<f64>::identity(ns, ns);
        for s in 0..ns {
            for (a, &p) in self.probs.row(s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (sp, &t) in self.model.next_dist(s, a).iter().enumerate() {
                    mt[(sp, s)] -= gamma * p * t;
                }
            }
        }
        let rhs = DVector::from_fn(ns, |s, _| (1.0 - gamma) * self.model.initial_dist()[s]);
        let d = mt.lu().solve(&rhs).ok_or(CmdpError::Singular)?;
        Ok(VisitationDistribution { d: d.iter().copied().collect() })
    }

    /// Utility values U_{g_i}(ρ) for every constraint.
    pub fn utilities(&self) -> Result<Vec<f64>> {
        let rho = self.model.initial_dist();
        self.model.utilities().iter().map(|g| Ok(self.value(g)?.at(rho))).collect()
    }
}

/// One-step backup Q(s,a) = reward(s,a) + γ Σ_{s'} P(s'|s,a) V(s').
pub fn q_from_value(model: &TabularCmdp, reward: &SaTable, v: &ValueTable) -> QTable {
    let gamma = model.gamma();
    SaTable::from_fn(model.num_states(), model.num_actions(), |s, a| {
        reward.get(s, a) + gamma * model.next_dist(s, a).iter().zip(&v.v).map(|(p, x)| p * x).sum::<f64>()
    })
}

/// Per-pair reward `reward(s,a) − τ log π(a|s)`.
pub fn entropy_augmented_reward(reward: &SaTable, policy: &Policy, tau: f64) -> SaTable {
    let lp = policy.log_probs();
    SaTable::from_fn(reward.num_states(), reward.num_actions(), |s, a| reward.get(s, a) - tau * lp.get(s, a))
}

pub fn evaluate_value<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P, reward: &SaTable) -> Result<ValueTable> {
    PolicyEvaluator::new(model, policy)?.value(reward)
}

pub fn evaluate_q<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P, reward: &SaTable) -> Result<QTable> {
    PolicyEvaluator::new(model, policy)?.q(reward)
}

pub fn discounted_visitation<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P) -> Result<VisitationDistribution> {
    PolicyEvaluator::new(model, policy)?.visitation()
}

/// State-wise discounted entropy, i.e. values under reward −log π.
pub fn entropy_values(model: &TabularCmdp, policy: &Policy) -> Result<ValueTable> {
    let neg_log = SaTable::from_fn(model.num_states(), model.num_actions(), |s, a| -policy.log_prob(s, a));
    evaluate_value(model, policy, &neg_log)
}

/// H(ρ, π).
pub fn discounted_entropy(model: &TabularCmdp, policy: &Policy) -> Result<f64> {
    Ok(entropy_values(model, policy)?.at(model.initial_dist()))
}

pub fn evaluate_soft_value(model: &TabularCmdp, policy: &Policy, reward: &SaTable, tau: f64) -> Result<ValueTable> {
    check_tau(tau)?;
    evaluate_value(model, policy, &entropy_augmented_reward(reward, policy, tau))
}

pub fn evaluate_soft_q(model: &TabularCmdp, policy: &Policy, reward: &SaTable, tau: f64) -> Result<QTable> {
    let v = evaluate_soft_value(model, policy, reward, tau)?;
    Ok(q_from_value(model, reward, &v))
}

pub fn utility_values<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P) -> Result<Vec<f64>> {
    PolicyEvaluator::new(model, policy)?.utilities()
}

/// ∂V(ρ)/∂θ(s,a) = d(s)π(a|s)A(s,a)/(1−γ) under the soft-max parameterization.
pub fn softmax_policy_gradient(model: &TabularCmdp, policy: &Policy, reward: &SaTable) -> Result<SaTable> {
    let ev = PolicyEvaluator::new(model, policy)?;
    let v = ev.value(reward)?;
    let q = q_from_value(model, reward, &v);
    let d = ev.visitation()?;
    let scale = 1.0 / (1.0 - model.gamma());
    Ok(SaTable::from_fn(model.num_states(), model.num_actions(), |s, a| {
        scale * d.d[s] * policy.prob(s, a) * (q.get(s, a) - v.v[s])
    }))
}

/// ∂V(ρ)/∂π(a|s) = d(s)Q(s,a)/(1−γ) under the direct parameterization.
pub fn direct_policy_gradient<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P, reward: &SaTable) -> Result<SaTable> {
    let ev = PolicyEvaluator::new(model, policy)?;
    let q = ev.q(reward)?;
    let d = ev.visitation()?;
    let scale = 1.0 / (1.0 - model.gamma());
    Ok(SaTable::from_fn(model.num_states(), model.num_actions(), |s, a| scale * d.d[s] * q.get(s, a)))
}

/// Frobenius distance between probability tables.
pub fn policy_distance<P: DecisionRule + ?Sized, Q: DecisionRule + ?Sized>(p: &P, q: &Q) -> f64 {
    p.probs().frobenius_distance(q.probs())
}

/// KL(p‖q) in nats; terms with p = 0 contribute zero.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi == 0.0 { 0.0 } else { pi * (pi.ln() - qi.ln()) })
        .sum()
}

/// r_λ = r + Σ_i λ_i g_i.
pub fn lagrangian_reward(model: &TabularCmdp, lambda: &[f64]) -> Result<SaTable> {
    if lambda.len() != model.num_constraints() {
        return Err(CmdpError::Shape(format!(
            "lambda has {} entries, model has {} constraints",
            lambda.len(),
            model.num_constraints()
        )));
    }
    if let Some(i) = lambda.iter().position(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(CmdpError::InvalidArgument(format!("lambda[{i}] = {} must be finite and >= 0", lambda[i])));
    }
    let mut r = model.reward().clone();
    for (l, g) in lambda.iter().zip(model.utilities()) {
        if *l == 0.0 {
            continue;
        }
        for s in 0..model.num_states() {
            for a in 0..model.num_actions() {
                r.set(s, a, r.get(s, a) + l * g.get(s, a));
            }
        }
    }
    Ok(r)
}

/// L(π, λ) = V_τ^π(ρ) + λᵀ(U_g^π(ρ) − b).
pub fn lagrangian(model: &TabularCmdp, policy: &Policy, lambda: &[f64], tau: f64) -> Result<f64> {
    let r = lagrangian_reward(model, lambda)?;
    let v = evaluate_soft_value(model, policy, &r, tau)?.at(model.initial_dist());
    let lb: f64 = lambda.iter().zip(model.thresholds()).map(|(l, b)| l * b).sum();
    Ok(v - lb)
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(CmdpError::InvalidArgument(format!("tau = {tau} must be finite and >= 0")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmdpData;

    fn single(gamma: f64) -> TabularCmdp {
        TabularCmdp::from_data(CmdpData {
            num_states: 1,
            num_actions: 1,
            gamma,
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![1.0]],
            utilities: vec![vec![vec![1.0]]],
            thresholds: vec![5.0],
            initial_dist: vec![1.0],
        })
        .unwrap()
    }

    #[test]
    fn geometric_series() {
        let m = single(0.9);
        let p = Policy::uniform(1, 1);
        let v = evaluate_value(&m, &p, m.reward()).unwrap();
        assert!((v.v[0] - 10.0).abs() < 1e-12);
        let q = evaluate_q(&m, &p, m.reward()).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() < 1e-12);
        assert_eq!(discounted_visitation(&m, &p).unwrap().d, vec![1.0]);
        assert!((utility_values(&m, &p).unwrap()[0] - 10.0).abs() < 1e-12);
        assert_eq!(discounted_entropy(&m, &p).unwrap(), 0.0);
        let g = softmax_policy_gradient(&m, &p, m.reward()).unwrap();
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn zero_reward_zero_value() {
        let m = single(0.9);
        let p = Policy::uniform(1, 1);
        let z = SaTable::zeros(1, 1);
        assert_eq!(evaluate_value(&m, &p, &z).unwrap().v, vec![0.0]);
    }

    #[test]
    fn lagrangian_reward_constant_utility() {
        let m = single(0.9);
        let r = lagrangian_reward(&m, &[2.0]).unwrap();
        assert_eq!(r.get(0, 0), 3.0);
        assert!(lagrangian_reward(&m, &[-1.0]).is_err());
    }

    #[test]
    fn kl_zero_on_equal() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }
}
