mod common;

use approx::assert_abs_diff_eq;

use cmdp_core::bench::gen_random_cmdp;
use cmdp_core::bisection::*;
use cmdp_core::dual::{compute_constants, dual_value_and_gradient, InnerBudget};
use cmdp_core::model::CmdpData;
use cmdp_core::oracles::dual_grid_search;
use cmdp_core::{CmdpError, Policy, TabularCmdp};

fn data(reward: Vec<Vec<f64>>, g: Vec<Vec<f64>>, b: f64, gamma: f64) -> CmdpData {
    let (ns, na) = (reward.len(), reward[0].len());
    CmdpData {
        num_states: ns,
        num_actions: na,
        gamma,
        transition: vec![vec![vec![1.0 / ns as f64; ns]; na]; ns],
        reward,
        utilities: vec![g],
        thresholds: vec![b],
        initial_dist: vec![1.0 / ns as f64; ns],
    }
}

#[test]
fn single_policy_gradient_is_constant() {
    let m = TabularCmdp::from_data(data(vec![vec![0.5]], vec![vec![1.0]], 5.0, 0.9)).unwrap();
    for l in [0.0, 1.0, 17.0] {
        let (g, _) = grad_sub(&m, l, &Policy::uniform(1, 1), 0.1, &InnerBudget::fixed(2)).unwrap();
        assert_abs_diff_eq!(g, 5.0, epsilon = 1e-12);
    }
}

#[test]
fn zero_threshold_gives_positive_gradient() {
    let (m, _) = gen_random_cmdp(2, 4, 2, 1, 0.9).unwrap();
    let m = m.with_thresholds(vec![0.0]).unwrap();
    for l in [0.0, 0.5, 5.0] {
        let (g, _) = grad_sub(&m, l, &Policy::uniform(4, 2), 0.1, &InnerBudget::fixed(50)).unwrap();
        assert!(g > 0.0);
    }
}

#[test]
fn grad_sub_agrees_with_dual_evaluation() {
    let (m, _) = gen_random_cmdp(3, 4, 2, 1, 0.9).unwrap();
    let warm = Policy::uniform(4, 2);
    let inner = InnerBudget::fixed(17);
    let (g, _) = grad_sub(&m, 0.8, &warm, 0.1, &inner).unwrap();
    let ev = dual_value_and_gradient(&m, &[0.8], 0.1, &warm, &inner).unwrap();
    assert_abs_diff_eq!(g, ev.gradient[0], epsilon = 1e-10);
}

#[test]
fn multi_constraint_rejected() {
    let (m, slater) = gen_random_cmdp(4, 3, 2, 2, 0.9).unwrap();
    match grad_sub(&m, 0.0, &slater, 0.1, &InnerBudget::fixed(1)) {
        Err(CmdpError::Config(msg)) => assert_eq!(msg, "bisection requires exactly one constraint"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn slack_model_short_circuits_at_zero() {
    let (m, _) = gen_random_cmdp(5, 4, 2, 1, 0.9).unwrap();
    let m = m.with_thresholds(vec![0.0]).unwrap();
    let slater = Policy::uniform(4, 2);
    let c = compute_constants(&m, &slater, 0.1).unwrap();
    let cfg = BisectionConfig::from_constants(&m, &c, 0.1, 1e-3, 1e-8).unwrap();
    let res = bisection_solve(&m, 0.1, &cfg).unwrap();
    assert_eq!(res.lambda, 0.0);
    assert_eq!(res.termination, Termination::LowerEndpoint);
    assert_eq!(res.outer_iters, 0);
}

#[test]
fn bandit_lands_near_grid_optimum() {
    // r favours action 0, g favours action 1
    let m = TabularCmdp::from_data(data(vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]], 0.5, 0.0)).unwrap();
    let slater = Policy::from_probs(cmdp_core::SaTable::from_rows(&[vec![0.2, 0.8]]).unwrap()).unwrap();
    let tau = 0.5;
    let c = compute_constants(&m, &slater, tau).unwrap();
    let cfg = BisectionConfig::from_constants(&m, &c, tau, 1e-2, 1e-8).unwrap();
    let res = bisection_solve(&m, tau, &cfg).unwrap();
    let grid = dual_grid_search(&m, tau, &c.dual_box(tau, 2, 0.0).unwrap(), 1e-4).unwrap();
    // symmetric bandit: the constraint binds at λ* = 1 exactly
    assert_abs_diff_eq!(grid.lambda_star[0], 1.0, epsilon = 1e-4);
    let (p, q) = res.interval;
    assert!((res.lambda - grid.lambda_star[0]).abs() <= q - p);
}

#[test]
fn random_instances_meet_iteration_bound() {
    let tau = 0.1;
    let eps = 1e-3;
    for (_, m, slater) in common::active_instances(5, 2, tau, 3) {
        let c = compute_constants(&m, &slater, tau).unwrap();
        let cfg = BisectionConfig::from_constants(&m, &c, tau, eps, 1e-8).unwrap();
        let res = bisection_solve(&m, tau, &cfg).unwrap();
        assert_eq!(res.termination, Termination::GradientBelowEpsilon);
        assert!(res.outer_iters <= outer_iteration_bound(c.ell, c.c2, eps));
        let last = res.trace.rows.last().unwrap();
        assert!(last.grad_estimate.abs() < eps);
        // widths halve exactly
        for w in res.trace.rows.windows(2) {
            assert_abs_diff_eq!(w[1].q - w[1].p, 0.5 * (w[0].q - w[0].p), epsilon = 1e-12);
        }
    }
}
