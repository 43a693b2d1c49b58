mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cmdp_core::bench::{gen_random_cmdp, random_policy};
use cmdp_core::eval::*;
use cmdp_core::model::{validate_model, CmdpData};
use cmdp_core::oracles::{truncated_rollout_value, truncated_visitation};
use cmdp_core::{DecisionRule, Policy, SaTable, TabularCmdp};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn generated_model_validates() {
    let (m, _) = gen_random_cmdp(3, 5, 3, 2, 0.9).unwrap();
    assert!(validate_model(&m.to_data()).is_pass());
}

#[test]
fn value_matches_truncated_series() {
    let (m, _) = gen_random_cmdp(11, 3, 2, 1, 0.9).unwrap();
    let p = Policy::uniform(3, 2);
    let v = evaluate_value(&m, &p, m.reward()).unwrap().at(m.initial_dist());
    let oracle = truncated_rollout_value(&m, &p, m.reward(), 500);
    // truncation error γ^500/(1−γ) is far below round-off here
    assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
}

#[test]
fn q_matches_one_step_expansion_of_oracle() {
    let (m, _) = gen_random_cmdp(12, 3, 2, 1, 0.8).unwrap();
    let p = random_policy(&mut rng(1), 3, 2, 1.0);
    let q = evaluate_q(&m, &p, m.reward()).unwrap();
    for s in 0..3 {
        for a in 0..2 {
            // V(s') from the series with ρ = δ_{s'}
            let mut expect = m.reward().get(s, a);
            for (sp, &t) in m.next_dist(s, a).iter().enumerate() {
                let mut d = m.to_data();
                d.initial_dist = (0..3).map(|x| if x == sp { 1.0 } else { 0.0 }).collect();
                let ms = TabularCmdp::from_data(d).unwrap();
                expect += m.gamma() * t * truncated_rollout_value(&ms, &p, m.reward(), 400);
            }
            assert_abs_diff_eq!(q.get(s, a), expect, epsilon = 1e-10);
        }
    }
}

#[test]
fn visitation_matches_series_and_edge_cases() {
    let (m, _) = gen_random_cmdp(13, 4, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(2), 4, 2, 1.0);
    let d = discounted_visitation(&m, &p).unwrap();
    let oracle = truncated_visitation(&m, &p, 500);
    for (a, b) in d.d.iter().zip(&oracle) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    let mut data = m.to_data();
    data.gamma = 0.0;
    let m0 = TabularCmdp::from_data(data).unwrap();
    assert_eq!(discounted_visitation(&m0, &p).unwrap().d, m0.initial_dist());
}

#[test]
fn entropy_cases() {
    let (m, _) = gen_random_cmdp(14, 3, 4, 0, 0.9).unwrap();
    let h = discounted_entropy(&m, &Policy::uniform(3, 4)).unwrap();
    assert_abs_diff_eq!(h, 10.0 * 4f64.ln(), epsilon = 1e-12);

    let (m2, _) = gen_random_cmdp(15, 3, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(3), 3, 2, 1.5);
    let neg_log = SaTable::from_fn(3, 2, |s, a| -p.log_prob(s, a));
    let series = truncated_rollout_value(&m2, &p, &neg_log, 500);
    assert_abs_diff_eq!(discounted_entropy(&m2, &p).unwrap(), series, epsilon = 1e-10);

    let (m1, _) = gen_random_cmdp(16, 3, 1, 0, 0.9).unwrap();
    assert_eq!(discounted_entropy(&m1, &Policy::uniform(3, 1)).unwrap(), 0.0);
}

#[test]
fn soft_value_two_paths_agree() {
    let (m, _) = gen_random_cmdp(17, 3, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(4), 3, 2, 1.0);
    let rho = m.initial_dist();
    let soft = evaluate_soft_value(&m, &p, m.reward(), 0.5).unwrap().at(rho);
    let split = evaluate_value(&m, &p, m.reward()).unwrap().at(rho) + 0.5 * discounted_entropy(&m, &p).unwrap();
    assert_abs_diff_eq!(soft, split, epsilon = 1e-10);
    assert_eq!(
        evaluate_soft_value(&m, &p, m.reward(), 0.0).unwrap(),
        evaluate_value(&m, &p, m.reward()).unwrap()
    );
    let (m1, _) = gen_random_cmdp(18, 3, 1, 0, 0.9).unwrap();
    let p1 = Policy::uniform(3, 1);
    assert_eq!(
        evaluate_soft_value(&m1, &p1, m1.reward(), 0.7).unwrap(),
        evaluate_value(&m1, &p1, m1.reward()).unwrap()
    );
}

#[test]
fn soft_q_cases() {
    let (m, _) = gen_random_cmdp(19, 3, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(5), 3, 2, 1.0);
    let q = evaluate_soft_q(&m, &p, m.reward(), 0.3).unwrap();
    let v = evaluate_soft_value(&m, &p, m.reward(), 0.3).unwrap();
    for s in 0..3 {
        let back: f64 = (0..2).map(|a| p.prob(s, a) * (q.get(s, a) - 0.3 * p.log_prob(s, a))).sum();
        assert_abs_diff_eq!(back, v.v[s], epsilon = 1e-10);
    }
    assert_eq!(evaluate_soft_q(&m, &p, m.reward(), 0.0).unwrap(), evaluate_q(&m, &p, m.reward()).unwrap());

    let mut d = m.to_data();
    d.gamma = 0.0;
    let m0 = TabularCmdp::from_data(d).unwrap();
    let q0 = evaluate_soft_q(&m0, &p, m0.reward(), 0.9).unwrap();
    assert_eq!(&q0, m0.reward());
}

#[test]
fn utilities_constant_and_series() {
    let (m, _) = gen_random_cmdp(20, 3, 2, 2, 0.9).unwrap();
    let ones = vec![vec![1.0; 2]; 3];
    let zeros = vec![vec![0.0; 2]; 3];
    let mc = m.with_constraints(vec![ones, zeros], vec![0.0, 0.0]).unwrap();
    let p = random_policy(&mut rng(6), 3, 2, 1.0);
    let u = utility_values(&mc, &p).unwrap();
    assert_abs_diff_eq!(u[0], 10.0, epsilon = 1e-12);
    assert_eq!(u[1], 0.0);

    let u = utility_values(&m, &p).unwrap();
    for (i, ui) in u.iter().enumerate() {
        assert_abs_diff_eq!(*ui, truncated_rollout_value(&m, &p, m.utility(i), 500), epsilon = 1e-10);
    }
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let (m, _) = gen_random_cmdp(21, 3, 2, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(7), 3, 2, 1.0);
    let g = softmax_policy_gradient(&m, &p, m.reward()).unwrap();
    let h = 1e-5;
    for s in 0..3 {
        for a in 0..2 {
            let at = |delta: f64| {
                let mut th = p.log_probs().clone();
                th.set(s, a, th.get(s, a) + delta);
                let q = Policy::from_logits(th).unwrap();
                evaluate_value(&m, &q, m.reward()).unwrap().at(m.initial_dist())
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, g.get(s, a), epsilon = 1e-6);
        }
    }
}

#[test]
fn softmax_gradient_vanishes_on_flat_q() {
    // every action has the same reward and transition ⇒ zero advantage
    let data = CmdpData {
        num_states: 2,
        num_actions: 2,
        gamma: 0.9,
        transition: vec![vec![vec![0.3, 0.7]; 2], vec![vec![0.6, 0.4]; 2]],
        reward: vec![vec![0.2, 0.2], vec![0.9, 0.9]],
        utilities: vec![],
        thresholds: vec![],
        initial_dist: vec![0.5, 0.5],
    };
    let m = TabularCmdp::from_data(data).unwrap();
    let p = random_policy(&mut rng(8), 2, 2, 1.0);
    let g = softmax_policy_gradient(&m, &p, m.reward()).unwrap();
    assert!(g.as_slice().iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn direct_gradient_raw_and_renormalized() {
    let (m, _) = gen_random_cmdp(22, 3, 3, 0, 0.9).unwrap();
    let p = random_policy(&mut rng(9), 3, 3, 1.0);
    let g = direct_policy_gradient(&m, &p, m.reward()).unwrap();
    let h = 1e-5;
    let rho = m.initial_dist();
    for s in 0..3 {
        for a in 0..3 {
            let raw = |d: f64| {
                let mut t = p.probs().clone();
                t.set(s, a, t.get(s, a) + d);
                evaluate_value(&m, &t, m.reward()).unwrap().at(rho)
            };
            assert_abs_diff_eq!((raw(h) - raw(-h)) / (2.0 * h), g.get(s, a), epsilon = 1e-6);

            let renorm = |d: f64| {
                let mut t = p.probs().clone();
                t.set(s, a, t.get(s, a) + d);
                for x in t.row_mut(s) {
                    *x /= 1.0 + d;
                }
                evaluate_value(&m, &t, m.reward()).unwrap().at(rho)
            };
            let projected = g.get(s, a) - (0..3).map(|b| p.prob(s, b) * g.get(s, b)).sum::<f64>();
            assert_abs_diff_eq!((renorm(h) - renorm(-h)) / (2.0 * h), projected, epsilon = 1e-6);
        }
    }
}

#[test]
fn lagrangian_reward_spot_check() {
    let (m, _) = gen_random_cmdp(23, 3, 2, 2, 0.9).unwrap();
    let r = lagrangian_reward(&m, &[0.5, 1.5]).unwrap();
    for s in 0..3 {
        for a in 0..2 {
            let hand = m.reward().get(s, a) + 0.5 * m.utility(0).get(s, a) + 1.5 * m.utility(1).get(s, a);
            assert_abs_diff_eq!(r.get(s, a), hand, epsilon = 1e-15);
        }
    }
    assert_eq!(&lagrangian_reward(&m, &[0.0, 0.0]).unwrap(), m.reward());
}

#[test]
fn kl_l1_bound_bits_and_pinsker() {
    let mut r = rng(10);
    for _ in 0..500 {
        let a = random_policy(&mut r, 1, 4, 3.0);
        let b = random_policy(&mut r, 1, 4, 3.0);
        let (p, q) = (a.probs().row(0), b.probs().row(0));
        let l1: f64 = p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum();
        let kl = kl_divergence(p, q);
        assert!(kl / std::f64::consts::LN_2 >= l1 * l1 / (2.0 * std::f64::consts::LN_2) - 1e-15);
        assert!(kl >= 0.5 * l1 * l1 - 1e-15);
    }
}

fn model_strategy() -> impl Strategy<Value = (TabularCmdp, Policy, f64)> {
    (any::<u64>(), 1usize..6, 1usize..5, 0.0f64..0.99, any::<u64>(), 0.0f64..2.0).prop_map(
        |(seed, ns, na, gamma, pseed, tau)| {
            let (m, _) = gen_random_cmdp(seed, ns, na, 1, gamma).unwrap();
            let p = random_policy(&mut rng(pseed), ns, na, 3.0);
            (m, p, tau)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn visitation_is_a_distribution_above_floor((m, p, _) in model_strategy()) {
        let d = discounted_visitation(&m, &p).unwrap();
        prop_assert!((d.d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (ds, rs) in d.d.iter().zip(m.initial_dist()) {
            prop_assert!(*ds >= (1.0 - m.gamma()) * rs - 1e-12);
        }
    }

    #[test]
    fn values_and_entropy_in_range((m, p, tau) in model_strategy()) {
        let rho = m.initial_dist();
        let g1 = 1.0 - m.gamma();
        let v = evaluate_value(&m, &p, m.reward()).unwrap().at(rho);
        prop_assert!(v >= -1e-12 && v <= 1.0 / g1 + 1e-9);
        let h = discounted_entropy(&m, &p).unwrap();
        prop_assert!(h >= -1e-12 && h <= (m.num_actions() as f64).ln() / g1 + 1e-9);
        let vs = evaluate_soft_value(&m, &p, m.reward(), tau).unwrap().at(rho);
        prop_assert!((vs - v - tau * h).abs() < 1e-8);
    }

    #[test]
    fn bellman_consistency((m, p, tau) in model_strategy()) {
        let v = evaluate_value(&m, &p, m.reward()).unwrap();
        let q = evaluate_q(&m, &p, m.reward()).unwrap();
        let vs = evaluate_soft_value(&m, &p, m.reward(), tau).unwrap();
        let qs = evaluate_soft_q(&m, &p, m.reward(), tau).unwrap();
        for s in 0..m.num_states() {
            let hard: f64 = (0..m.num_actions()).map(|a| p.prob(s, a) * q.get(s, a)).sum();
            let soft: f64 = (0..m.num_actions()).map(|a| p.prob(s, a) * (qs.get(s, a) - tau * p.log_prob(s, a))).sum();
            prop_assert!((hard - v.v[s]).abs() < 1e-9);
            prop_assert!((soft - vs.v[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn logits_always_normalize(logits in prop::collection::vec(-50.0f64..50.0, 12)) {
        let p = Policy::from_logits(SaTable::from_flat(3, 4, logits).unwrap()).unwrap();
        for s in 0..3 {
            prop_assert!((p.probs().row(s).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
