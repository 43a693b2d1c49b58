//! Property checks run by `cmdp check-invariants` on seeded random instances.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{gen_random_cmdp, random_policy};
use crate::dual::{compute_constants, dual_value_and_gradient, InnerBudget};
use crate::error::{CmdpError, Result};
use crate::eval::{
    direct_policy_gradient, discounted_visitation, evaluate_q, evaluate_soft_q, evaluate_soft_value, evaluate_value,
    kl_divergence, lagrangian, policy_distance, PolicyEvaluator,
};
use crate::model::{DecisionRule, Policy, TabularCmdp};
use crate::npg::{npg_solve, npg_step, NpgConfig};
use crate::oracles::{
    dual_grid_search, occupancy_lp_solve, soft_value_iteration, value_iteration, DEFAULT_VI_TOL,
};

pub const SUITES: &[&str] = &["model", "npg", "dual", "oracles"];

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    /// Worst observed residual (or bound violation); compare with `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{} worst={:.3e} tol={:.1e} cases={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.worst,
            self.tolerance,
            self.cases
        )
    }
}

struct Acc {
    suite: &'static str,
    name: &'static str,
    worst: f64,
    tol: f64,
    cases: usize,
}

impl Acc {
    fn new(suite: &'static str, name: &'static str, tol: f64) -> Self {
        Acc { suite, name, worst: 0.0, tol, cases: 0 }
    }

    fn add(&mut self, residual: f64) {
        self.cases += 1;
        if residual.is_nan() {
            self.worst = f64::INFINITY;
        } else {
            self.worst = self.worst.max(residual);
        }
    }

    fn done(self) -> CheckOutcome {
        CheckOutcome {
            suite: self.suite.into(),
            name: self.name.into(),
            passed: self.worst <= self.tol,
            worst: self.worst,
            tolerance: self.tol,
            cases: self.cases,
        }
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CheckOutcome>> {
    match name {
        "model" => model_suite(seed),
        "npg" => npg_suite(seed),
        "dual" => dual_suite(seed),
        "oracles" => oracle_suite(seed),
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
        other => Err(CmdpError::Config(format!("unknown suite {other:?}; expected one of {SUITES:?} or \"all\""))),
    }
}

fn instance(rng: &mut ChaCha8Rng, n: usize) -> Result<(TabularCmdp, Policy)> {
    let ns = rng.gen_range(2..=6);
    let na = rng.gen_range(2..=4);
    let gamma = rng.gen_range(0.5..0.95);
    gen_random_cmdp(rng.gen(), ns, na, n, gamma)
}

fn model_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bellman = Acc::new("model", "bellman-consistency", 1e-10);
    let mut bounds = Acc::new("model", "value-bounds", 1e-12);
    let mut visit = Acc::new("model", "visitation-lower-bound", 1e-12);
    let mut perf = Acc::new("model", "performance-difference", 1e-8);
    let mut lip = Acc::new("model", "lipschitz", 0.0);
    let mut kl = Acc::new("model", "kl-l1-bits", 0.0);
    let mut direct = Acc::new("model", "direct-gradient-fd", 1e-6);
    for _ in 0..20 {
        let (m, _) = instance(&mut rng, 1)?;
        let (ns, na, gamma) = (m.num_states(), m.num_actions(), m.gamma());
        let p = random_policy(&mut rng, ns, na, 2.0);
        let p2 = random_policy(&mut rng, ns, na, 2.0);
        let tau = rng.gen_range(0.01..1.0);
        let rho = m.initial_dist();

        let v = evaluate_value(&m, &p, m.reward())?;
        let q = evaluate_q(&m, &p, m.reward())?;
        let vs = evaluate_soft_value(&m, &p, m.reward(), tau)?;
        let qs = evaluate_soft_q(&m, &p, m.reward(), tau)?;
        for s in 0..ns {
            let hard: f64 = (0..na).map(|a| p.prob(s, a) * q.get(s, a)).sum();
            let soft: f64 = (0..na).map(|a| p.prob(s, a) * (qs.get(s, a) - tau * p.log_prob(s, a))).sum();
            bellman.add((hard - v.v[s]).abs().max((soft - vs.v[s]).abs()));
        }
        let vr = v.at(rho);
        bounds.add((-vr).max(vr - 1.0 / (1.0 - gamma)).max(0.0));

        let d = discounted_visitation(&m, &p)?;
        for (r, ds) in rho.iter().zip(&d.d) {
            visit.add(((1.0 - gamma) * r - ds).max(0.0));
        }

        let v2 = evaluate_value(&m, &p2, m.reward())?.at(rho);
        let q2 = evaluate_q(&m, &p2, m.reward())?;
        let mut rhs = 0.0;
        for s in 0..ns {
            for a in 0..na {
                rhs += d.d[s] * (p2.prob(s, a) - p.prob(s, a)) * q2.get(s, a);
            }
        }
        perf.add((v2 - vr - rhs / (1.0 - gamma)).abs());

        let ell_c = crate::dual::value_lipschitz(na, gamma);
        lip.add(((v2 - vr).abs() - ell_c * policy_distance(&p, &p2)).max(0.0));

        for s in 0..ns {
            let (a, b) = (p.probs().row(s), p2.probs().row(s));
            let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            let bits = kl_divergence(a, b) / std::f64::consts::LN_2;
            kl.add((l1 * l1 / (2.0 * std::f64::consts::LN_2) - bits).max(0.0));
        }

        let grad = direct_policy_gradient(&m, &p, m.reward())?;
        let s = rng.gen_range(0..ns);
        let a = rng.gen_range(0..na);
        let h = 1e-5;
        let perturbed = |sign: f64| -> Result<f64> {
            let mut t = p.probs().clone();
            t.set(s, a, t.get(s, a) + sign * h);
            Ok(evaluate_value(&m, &t, m.reward())?.at(rho))
        };
        let fd = (perturbed(1.0)? - perturbed(-1.0)?) / (2.0 * h);
        direct.add((fd - grad.get(s, a)).abs());
    }
    Ok(vec![bellman.done(), bounds.done(), visit.done(), perf.done(), lip.done(), kl.done(), direct.done()])
}

fn npg_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valid = Acc::new("npg", "rows-normalized", 1e-10);
    let mut rate = Acc::new("npg", "linear-contraction", 0.0);
    let mut fixed = Acc::new("npg", "fixed-point", 1e-8);
    for _ in 0..10 {
        let (m, _) = gen_random_cmdp(rng.gen(), 5, 3, 1, 0.9)?;
        let tau = [0.05, 0.1, 0.5][rng.gen_range(0..3)];
        let lambda = [rng.gen_range(0.0..2.0)];
        let r = crate::eval::lagrangian_reward(&m, &lambda)?;
        let star = soft_value_iteration(&m, &r, tau, DEFAULT_VI_TOL)?;
        let init = random_policy(&mut rng, 5, 3, 1.0);
        let cfg = NpgConfig::new(tau, 60).with_stop_tol(1e-14);
        let out = npg_solve(&m, &init, &lambda, &cfg, Some(&star.policy))?;
        let mut prev = init.log_distance(&star.policy);
        for rec in &out.trace.records {
            let e = rec.oracle_error.unwrap_or(f64::NAN);
            // contraction only asserted above the round-off floor
            if prev > 1e-10 {
                rate.add((e - 0.9 * 1.05 * prev).max(0.0));
            }
            prev = e;
        }
        let one = npg_step(&m, &init, &lambda, &cfg)?;
        for s in 0..5 {
            valid.add((one.probs().row(s).iter().sum::<f64>() - 1.0).abs());
        }
        let qs = evaluate_soft_q(&m, &out.policy, &r, tau)?;
        let vs = evaluate_soft_value(&m, &out.policy, &r, tau)?;
        for s in 0..5 {
            for a in 0..3 {
                fixed.add((out.policy.log_prob(s, a) - (qs.get(s, a) - vs.v[s]) / tau).abs());
            }
        }
    }
    Ok(vec![valid.done(), rate.done(), fixed.done()])
}

fn dual_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convex = Acc::new("dual", "midpoint-convexity", 0.0);
    let mut smooth = Acc::new("dual", "smoothness", 0.0);
    let mut weak = Acc::new("dual", "weak-duality", 0.0);
    let mut quad = Acc::new("dual", "quadratic-lower-bound", 1e-10);
    let inner = InnerBudget::with_stop_tol(500, 1e-13);
    for _ in 0..4 {
        let n = rng.gen_range(1..=2);
        let (m, slater) = gen_random_cmdp(rng.gen(), 4, 3, n, 0.9)?;
        let tau = 0.1;
        let c = compute_constants(&m, &slater, tau)?;
        let bx = c.dual_box(tau, 3, 0.9)?;
        let uni = Policy::uniform(4, 3);
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> { bx.upper.iter().map(|u| rng.gen::<f64>() * u.min(20.0)).collect() };
        let eval = |l: &[f64]| dual_value_and_gradient(&m, l, tau, &uni, &inner);
        let allow = |e: &crate::dual::DualEval| {
            crate::dual::Constants::inexactness_allowance(n, 3, 0.9, e.certified_log_error.unwrap_or(1.0))
        };
        for _ in 0..10 {
            let (l1, l2) = (sample(&mut rng), sample(&mut rng));
            let mid: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| 0.5 * (a + b)).collect();
            let (e1, e2, em) = (eval(&l1)?, eval(&l2)?, eval(&mid)?);
            let slack = 2.0 * allow(&e1).max(allow(&e2)).max(allow(&em));
            convex.add((em.value - 0.5 * (e1.value + e2.value) - slack).max(0.0));
            let dg = e1.gradient.iter().zip(&e2.gradient).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dl = l1.iter().zip(&l2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            smooth.add((dg - c.ell * dl - allow(&e1) - allow(&e2)).max(0.0));
            let lam_pol = eval(&l1)?;
            for _ in 0..3 {
                let p = random_policy(&mut rng, 4, 3, 2.0);
                let gap = lagrangian(&m, &lam_pol.policy, &l1, tau)? - lagrangian(&m, &p, &l1, tau)?;
                let dist = policy_distance(&p, &lam_pol.policy);
                let bound = tau * c.d_hat / (2.0 * (1.0 - 0.9) * std::f64::consts::LN_2) * dist * dist;
                quad.add((bound - gap).max(0.0));
            }
        }
        if n == 1 {
            // D* from the grid must upper-bound the soft value of a feasible policy
            let g = dual_grid_search(&m, tau, &bx, 1e-3)?;
            let feasible_soft = evaluate_soft_value(&m, &slater, m.reward(), tau)?.at(m.initial_dist());
            weak.add((feasible_soft - g.d_star).max(0.0));
            for _ in 0..5 {
                let l = sample(&mut rng);
                let e = eval(&l)?;
                weak.add((g.d_star - e.value - allow(&e) - 1e-9).max(0.0));
            }
        }
    }
    Ok(vec![convex.done(), smooth.done(), weak.done(), quad.done()])
}

fn oracle_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp_vi = Acc::new("oracles", "lp-matches-value-iteration", 1e-8);
    let mut lp_policy = Acc::new("oracles", "lp-policy-reevaluation", 1e-8);
    let mut flow = Acc::new("oracles", "lp-flow-constraints", 1e-8);
    let mut contraction = Acc::new("oracles", "soft-vi-contraction", 1e-12);
    let mut sandwich = Acc::new("oracles", "sandwich-bound", 1e-9);
    for _ in 0..10 {
        let (m, _) = instance(&mut rng, 1)?;
        let (na, gamma) = (m.num_actions(), m.gamma());
        let rho = m.initial_dist();
        let lp = occupancy_lp_solve(&m)?;
        flow.add(lp.occupancy.flow_residual(&m));
        lp_policy.add((evaluate_value(&m, &lp.policy, m.reward())?.at(rho) - lp.value).abs());
        let free = m.with_constraints(vec![], vec![])?;
        let lp_free = occupancy_lp_solve(&free)?;
        let (v_star, _) = value_iteration(&free, free.reward(), DEFAULT_VI_TOL)?;
        lp_vi.add((lp_free.value - v_star.at(rho)).abs());
        for tau in [0.01, 0.1, 1.0] {
            let sv = soft_value_iteration(&free, free.reward(), tau, DEFAULT_VI_TOL)?;
            for w in sv.deltas.windows(2) {
                contraction.add((w[1] - gamma * w[0]).max(0.0));
            }
            let v_soft_pol = PolicyEvaluator::new(&free, &sv.policy)?.value(free.reward())?.at(rho);
            let v_opt = v_star.at(rho);
            let allowance = tau * (na as f64).ln() / (1.0 - gamma);
            sandwich.add((v_soft_pol - v_opt).max(0.0).max(v_opt - v_soft_pol - allowance));
        }
    }
    Ok(vec![lp_vi.done(), lp_policy.done(), flow.done(), contraction.done(), sandwich.done()])
}
