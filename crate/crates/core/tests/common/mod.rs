#![allow(dead_code)]

use cmdp_core::bench::gen_random_cmdp;
use cmdp_core::eval::{lagrangian_reward, utility_values};
use cmdp_core::oracles::{soft_value_iteration, DEFAULT_VI_TOL};
use cmdp_core::{Policy, TabularCmdp};

/// Seeded random instances (n = 1) whose soft-optimal unconstrained policy
/// violates the constraint at the given τ.
pub fn active_instances(ns: usize, na: usize, tau: f64, count: usize) -> Vec<(u64, TabularCmdp, Policy)> {
    let mut out = Vec::new();
    for seed in 0.. {
        let (m, slater) = gen_random_cmdp(seed, ns, na, 1, 0.9).unwrap();
        let r = lagrangian_reward(&m, &[0.0]).unwrap();
        let sv = soft_value_iteration(&m, &r, tau, DEFAULT_VI_TOL).unwrap();
        if utility_values(&m, &sv.policy).unwrap()[0] < m.thresholds()[0] {
            out.push((seed, m, slater));
            if out.len() == count {
                break;
            }
        }
    }
    out
}

/// Unconstrained copy of a model.
pub fn unconstrained(m: &TabularCmdp) -> TabularCmdp {
    m.with_constraints(vec![], vec![]).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
