use crate::model::{DecisionRule, SaTable, TabularCmdp};

fn step(model: &TabularCmdp, probs: &SaTable, x: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; model.num_states()];
    for (s, &xs) in x.iter().enumerate() {
        if xs == 0.0 {
            continue;
        }
        for (a, &p) in probs.row(s).iter().enumerate() {
            let w = xs * p;
            if w == 0.0 {
                continue;
            }
            for (sp, &t) in model.next_dist(s, a).iter().enumerate() {
                next[sp] += w * t;
            }
        }
    }
    next
}

/// Σ_{t<horizon} γ^t ρᵀP_π^t r_π by explicit forward recursion.
pub fn truncated_rollout_value<P: DecisionRule + ?Sized>(
    model: &TabularCmdp,
    policy: &P,
    reward: &SaTable,
    horizon: usize,
) -> f64 {
    let probs = policy.probs();
    let r_pi: Vec<f64> = (0..model.num_states())
        .map(|s| probs.row(s).iter().zip(reward.row(s)).map(|(p, r)| p * r).sum())
        .collect();
    let mut x = model.initial_dist().to_vec();
    let mut disc = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        total += disc * x.iter().zip(&r_pi).map(|(a, b)| a * b).sum::<f64>();
        x = step(model, probs, &x);
        disc *= model.gamma();
    }
    total
}

/// (1−γ) Σ_{t<horizon} γ^t ρᵀP_π^t.
pub fn truncated_visitation<P: DecisionRule + ?Sized>(model: &TabularCmdp, policy: &P, horizon: usize) -> Vec<f64> {
    let probs = policy.probs();
    let mut x = model.initial_dist().to_vec();
    let mut d = vec![0.0; model.num_states()];
    let mut disc = 1.0 - model.gamma();
    for _ in 0..horizon {
        for (di, xi) in d.iter_mut().zip(&x) {
            *di += disc * xi;
        }
        x = step(model, probs, &x);
        disc *= model.gamma();
    }
    d
}
