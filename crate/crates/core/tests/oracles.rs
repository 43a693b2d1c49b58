mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cmdp_core::bench::{gen_random_cmdp, random_policy};
use cmdp_core::dual::{compute_constants, dual_value_and_gradient, DualBox, InnerBudget};
use cmdp_core::eval::{evaluate_soft_value, evaluate_value, utility_values};
use cmdp_core::model::CmdpData;
use cmdp_core::npg::{npg_step, NpgConfig};
use cmdp_core::oracles::simplex::{solve, LinearProgram, LpOutcome};
use cmdp_core::oracles::*;
use cmdp_core::{CmdpError, Policy, TabularCmdp};

fn bandit(r: [f64; 2], g: [f64; 2], b: f64) -> TabularCmdp {
    TabularCmdp::from_data(CmdpData {
        num_states: 1,
        num_actions: 2,
        gamma: 0.0,
        transition: vec![vec![vec![1.0], vec![1.0]]],
        reward: vec![r.to_vec()],
        utilities: vec![vec![g.to_vec()]],
        thresholds: vec![b],
        initial_dist: vec![1.0],
    })
    .unwrap()
}

#[test]
fn rollout_edge_cases() {
    let m = TabularCmdp::from_data(CmdpData {
        num_states: 1,
        num_actions: 1,
        gamma: 0.9,
        transition: vec![vec![vec![1.0]]],
        reward: vec![vec![1.0]],
        utilities: vec![],
        thresholds: vec![],
        initial_dist: vec![1.0],
    })
    .unwrap();
    let p = Policy::uniform(1, 1);
    assert_eq!(truncated_rollout_value(&m, &p, m.reward(), 0), 0.0);
    let v = truncated_rollout_value(&m, &p, m.reward(), 500);
    assert!((v - 10.0).abs() <= 1e-20 + 10.0 * 0.9f64.powi(500) + 1e-13);
}

#[test]
fn rollout_within_truncation_bound() {
    let (m, _) = gen_random_cmdp(1, 3, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut ChaCha8Rng::seed_from_u64(1), 3, 2, 1.0);
    let exact = evaluate_value(&m, &p, m.reward()).unwrap().at(m.initial_dist());
    for h in [10, 50, 200] {
        let bound = 0.9f64.powi(h as i32) / 0.1;
        let approx = truncated_rollout_value(&m, &p, m.reward(), h);
        assert!(exact - approx >= -1e-12 && exact - approx <= bound + 1e-12);
    }
}

#[test]
fn soft_vi_single_action_is_evaluation() {
    let (m, _) = gen_random_cmdp(2, 4, 1, 0, 0.9).unwrap();
    let out = soft_value_iteration(&m, m.reward(), 0.3, DEFAULT_VI_TOL).unwrap();
    let v = evaluate_value(&m, &Policy::uniform(4, 1), m.reward()).unwrap();
    for (a, b) in out.value.v.iter().zip(&v.v) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-11);
    }
}

#[test]
fn soft_vi_bandit_closed_form() {
    let m = bandit([1.0, 0.0], [0.0, 0.0], 0.0);
    let out = soft_value_iteration(&m, m.reward(), 1.0, DEFAULT_VI_TOL).unwrap();
    let e = std::f64::consts::E;
    assert_abs_diff_eq!(out.value.v[0], (e + 1.0).ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(out.policy.prob(0, 0), e / (1.0 + e), epsilon = 1e-12);
}

#[test]
fn soft_vi_is_npg_fixed_point() {
    let (m, _) = gen_random_cmdp(3, 5, 3, 0, 0.9).unwrap();
    let out = soft_value_iteration(&m, m.reward(), 0.1, DEFAULT_VI_TOL).unwrap();
    let next = npg_step(&m, &out.policy, &[], &NpgConfig::new(0.1, 1)).unwrap();
    assert!(next.log_distance(&out.policy) <= 1e-8);
    // contraction: successive changes shrink
    for w in out.deltas.windows(2) {
        assert!(w[1] <= 0.9 * w[0] + 1e-13);
    }
}

#[test]
fn grid_slack_constraint_optimum_at_zero() {
    let (m, _) = gen_random_cmdp(4, 4, 2, 1, 0.9).unwrap();
    let m = m.with_thresholds(vec![0.0]).unwrap();
    let g = dual_grid_search(&m, 0.1, &DualBox::new(vec![5.0]).unwrap(), 1e-3).unwrap();
    assert_eq!(g.lambda_star, vec![0.0]);
}

#[test]
fn grid_affine_dual_hits_endpoints() {
    let mk = |b: f64| {
        TabularCmdp::from_data(CmdpData {
            num_states: 1,
            num_actions: 1,
            gamma: 0.9,
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![0.5]],
            utilities: vec![vec![vec![0.5]]],
            thresholds: vec![b],
            initial_dist: vec![1.0],
        })
        .unwrap()
    };
    let bx = DualBox::new(vec![3.0]).unwrap();
    // U = 5
    assert_eq!(dual_grid_search(&mk(4.0), 0.1, &bx, 1e-3).unwrap().lambda_star, vec![0.0]);
    assert_eq!(dual_grid_search(&mk(6.0), 0.1, &bx, 1e-3).unwrap().lambda_star, vec![3.0]);
}

#[test]
fn grid_rejects_three_constraints() {
    let (m, _) = gen_random_cmdp(5, 2, 2, 3, 0.9).unwrap();
    assert!(dual_grid_search(&m, 0.1, &DualBox::new(vec![1.0; 3]).unwrap(), 1e-2).is_err());
}

#[test]
fn grid_lies_below_solver_dual_values() {
    let tau = 0.1;
    for (_, m, slater) in common::active_instances(4, 2, tau, 2) {
        let c = compute_constants(&m, &slater, tau).unwrap();
        let bx = c.dual_box(tau, 2, 0.9).unwrap();
        let g = dual_grid_search(&m, tau, &bx, 1e-3).unwrap();
        let warm = Policy::uniform(4, 2);
        for k in 0..20 {
            let l = bx.upper[0] * k as f64 / 19.0;
            let ev = dual_value_and_gradient(&m, &[l], tau, &warm, &InnerBudget::fixed(60)).unwrap();
            let allow = cmdp_core::dual::Constants::inexactness_allowance(1, 2, 0.9, ev.certified_log_error.unwrap());
            assert!(g.d_star <= ev.value + allow);
        }
        // and above the Lagrangian of a feasible policy (weak duality)
        let feasible = evaluate_soft_value(&m, &slater, m.reward(), tau).unwrap().at(m.initial_dist());
        assert!(g.d_star >= feasible);
    }
}

#[test]
fn lp_bandit_by_hand() {
    let m = bandit([1.0, 0.0], [0.0, 1.0], 0.5);
    let sol = occupancy_lp_solve(&m).unwrap();
    assert_abs_diff_eq!(sol.occupancy.mu.get(0, 0), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.occupancy.mu.get(0, 1), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.value, 0.5, epsilon = 1e-12);
}

#[test]
fn lp_infeasible_thresholds() {
    let (m, _) = gen_random_cmdp(6, 3, 2, 1, 0.9).unwrap();
    // g ≡ 0.5 caps U at 5
    let m = m.with_constraints(vec![vec![vec![0.5; 2]; 3]], vec![6.0]).unwrap();
    assert!(matches!(occupancy_lp_solve(&m), Err(CmdpError::Infeasible(_))));
}

#[test]
fn lp_unconstrained_matches_value_iteration() {
    for seed in 0..5 {
        let (m, _) = gen_random_cmdp(seed, 5, 3, 0, 0.9).unwrap();
        let lp = occupancy_lp_solve(&m).unwrap();
        let (v, _) = value_iteration(&m, m.reward(), 1e-13).unwrap();
        assert_abs_diff_eq!(lp.value, v.at(m.initial_dist()), epsilon = 1e-8);
    }
}

#[test]
fn lp_solution_is_consistent_and_beats_random_feasible_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..5 {
        let (m, _) = gen_random_cmdp(seed, 4, 3, 2, 0.9).unwrap();
        let lp = occupancy_lp_solve(&m).unwrap();
        assert!(lp.occupancy.flow_residual(&m) < 1e-8);
        assert_abs_diff_eq!(lp.occupancy.mu.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        let v = evaluate_value(&m, &lp.policy, m.reward()).unwrap().at(m.initial_dist());
        assert_abs_diff_eq!(v, lp.value, epsilon = 1e-8);
        let u = utility_values(&m, &lp.policy).unwrap();
        for (ui, bi) in u.iter().zip(m.thresholds()) {
            assert!(*ui >= bi - 1e-8);
        }
        for _ in 0..200 {
            let p = random_policy(&mut rng, 4, 3, 2.0);
            let up = utility_values(&m, &p).unwrap();
            if up.iter().zip(m.thresholds()).all(|(a, b)| a >= b) {
                assert!(evaluate_value(&m, &p, m.reward()).unwrap().at(m.initial_dist()) <= lp.value + 1e-9);
            }
        }
    }
}

#[test]
fn simplex_small_programs() {
    // max x + y, x + 2y = 4, x ≥ 1
    let lp = LinearProgram {
        c: vec![1.0, 1.0],
        a_eq: vec![vec![1.0, 2.0]],
        b_eq: vec![4.0],
        a_ge: vec![vec![1.0, 0.0]],
        b_ge: vec![1.0],
    };
    match solve(&lp) {
        LpOutcome::Optimal { x, objective } => {
            assert_abs_diff_eq!(objective, 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(x[0], 4.0, epsilon = 1e-12);
        }
        other => panic!("{other:?}"),
    }
    let unbounded = LinearProgram { c: vec![1.0], a_ge: vec![vec![1.0]], b_ge: vec![0.0], ..Default::default() };
    assert_eq!(solve(&unbounded), LpOutcome::Unbounded);
    let infeasible = LinearProgram { c: vec![1.0], a_eq: vec![vec![1.0]], b_eq: vec![-1.0], ..Default::default() };
    assert_eq!(solve(&infeasible), LpOutcome::Infeasible);
}

#[test]
fn sandwich_bound_examples() {
    for seed in 0..5 {
        let (m, _) = gen_random_cmdp(seed, 4, 3, 0, 0.9).unwrap();
        let (v, _) = value_iteration(&m, m.reward(), 1e-13).unwrap();
        let vstar = v.at(m.initial_dist());
        for tau in [0.01, 0.1, 1.0] {
            let soft = soft_value_iteration(&m, m.reward(), tau, DEFAULT_VI_TOL).unwrap();
            let vt = evaluate_value(&m, &soft.policy, m.reward()).unwrap().at(m.initial_dist());
            assert!(vt <= vstar + 1e-10);
            assert!(vstar <= vt + tau * 3f64.ln() / 0.1 + 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lp_policy_reproduces_objective(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, n in 0usize..3) {
        let (m, _) = gen_random_cmdp(seed, ns, na, n, 0.85).unwrap();
        let lp = occupancy_lp_solve(&m).unwrap();
        let v = evaluate_value(&m, &lp.policy, m.reward()).unwrap().at(m.initial_dist());
        prop_assert!((v - lp.value).abs() < 1e-8);
        prop_assert!(lp.occupancy.flow_residual(&m) < 1e-8);
    }
}
