use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CmdpError, Result};
use crate::eval::utility_values;
use crate::model::{CmdpData, Policy, SaTable, TabularCmdp};
use crate::oracles::{soft_value_iteration, value_iteration, DEFAULT_VI_TOL};

fn default_threshold_factor() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCmdpSpec {
    pub seed: u64,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_constraints: usize,
    pub gamma: f64,
    /// b_i = factor · U_{g_i}^{uniform}(ρ).
    #[serde(default = "default_threshold_factor")]
    pub threshold_factor: f64,
}

pub fn gen_random_cmdp(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    num_constraints: usize,
    gamma: f64,
) -> Result<(TabularCmdp, Policy)> {
    gen_random_cmdp_spec(&RandomCmdpSpec {
        seed,
        num_states,
        num_actions,
        num_constraints,
        gamma,
        threshold_factor: default_threshold_factor(),
    })
}

/// Random instance whose uniform policy is a certified Slater point.
pub fn gen_random_cmdp_spec(spec: &RandomCmdpSpec) -> Result<(TabularCmdp, Policy)> {
    let (ns, na) = (spec.num_states, spec.num_actions);
    if ns == 0 || na == 0 {
        return Err(CmdpError::InvalidArgument("num_states and num_actions must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.threshold_factor) {
        return Err(CmdpError::InvalidArgument("threshold_factor must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let transition = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| {
                    let row: Vec<f64> = (0..ns).map(|_| rng.gen_range(1e-3..1.0)).collect();
                    let sum: f64 = row.iter().sum();
                    row.into_iter().map(|x| x / sum).collect()
                })
                .collect()
        })
        .collect();
    let table = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..ns).map(|_| (0..na).map(|_| rng.gen::<f64>()).collect()).collect()
    };
    let reward = table(&mut rng);
    let utilities: Vec<_> = (0..spec.num_constraints).map(|_| table(&mut rng)).collect();
    let data = CmdpData {
        num_states: ns,
        num_actions: na,
        gamma: spec.gamma,
        transition,
        reward,
        thresholds: vec![0.0; utilities.len()],
        utilities,
        initial_dist: vec![1.0 / ns as f64; ns],
    };
    let base = TabularCmdp::from_data(data)?;
    let slater = Policy::uniform(ns, na);
    let u = utility_values(&base, &slater)?;
    let model = base.with_thresholds(u.iter().map(|x| spec.threshold_factor * x).collect())?;
    Ok((model, slater))
}

/// Random soft-max policy with logits uniform in [−scale, scale].
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, num_states: usize, num_actions: usize, scale: f64) -> Policy {
    let logits = SaTable::from_fn(num_states, num_actions, |_, _| rng.gen_range(-scale..=scale));
    Policy::from_logits(logits).expect("finite logits")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    /// Absorbing rewarding cell; defaults to the bottom-right corner.
    #[serde(default)]
    pub goal: Option<(usize, usize)>,
    /// Defaults to the cell left of the goal.
    #[serde(default)]
    pub hazards: Option<Vec<(usize, usize)>>,
    /// Temperature of the soft-optimal safety policy used as Slater point.
    #[serde(default = "default_slater_tau")]
    pub slater_tau: f64,
}

fn default_slater_tau() -> f64 {
    0.05
}

impl GridworldSpec {
    pub fn new(width: usize, height: usize, gamma: f64) -> Self {
        GridworldSpec { width, height, gamma, goal: None, hazards: None, slater_tau: default_slater_tau() }
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal.unwrap_or((self.width - 1, self.height - 1))
    }

    pub fn hazard_cells(&self) -> Vec<(usize, usize)> {
        self.hazards.clone().unwrap_or_else(|| {
            let (gx, gy) = self.goal_cell();
            vec![(if gx > 0 { gx - 1 } else { gx + 1 }, gy)]
        })
    }
}

pub fn gen_gridworld(width: usize, height: usize, gamma: f64) -> Result<(TabularCmdp, Policy)> {
    gen_gridworld_spec(&GridworldSpec::new(width, height, gamma))
}

/// Deterministic 4-action grid (up, down, left, right; walls block). The goal
/// is absorbing with reward 1; the single utility is 0 on hazards, 1 elsewhere.
///
/// The Slater point is the soft-optimal policy for the safety utility. When
/// the safest reward-optimal policy is still less safe, b is the midpoint of the two
/// utilities so the constraint binds; otherwise b = 0.9·U^{slater}.
pub fn gen_gridworld_spec(spec: &GridworldSpec) -> Result<(TabularCmdp, Policy)> {
    let (w, h) = (spec.width, spec.height);
    if w < 2 || h < 2 {
        return Err(CmdpError::InvalidArgument("gridworld needs width, height >= 2".into()));
    }
    let goal = spec.goal_cell();
    let hazards = spec.hazard_cells();
    let in_grid = |(x, y): (usize, usize)| x < w && y < h;
    if !in_grid(goal) || hazards.iter().any(|c| !in_grid(*c)) {
        return Err(CmdpError::InvalidArgument("goal or hazard outside the grid".into()));
    }
    if hazards.contains(&goal) {
        return Err(CmdpError::InvalidArgument("goal cannot be a hazard".into()));
    }
    let ns = w * h;
    let idx = |x: usize, y: usize| y * w + x;
    let mut transition = vec![vec![vec![0.0; ns]; 4]; ns];
    for y in 0..h {
        for x in 0..w {
            let s = idx(x, y);
            for (a, row) in transition[s].iter_mut().enumerate() {
                let next = if (x, y) == goal {
                    s
                } else {
                    match a {
                        0 if y > 0 => idx(x, y - 1),
                        1 if y + 1 < h => idx(x, y + 1),
                        2 if x > 0 => idx(x - 1, y),
                        3 if x + 1 < w => idx(x + 1, y),
                        _ => s,
                    }
                };
                row[next] = 1.0;
            }
        }
    }
    let reward = (0..ns).map(|s| vec![if s == idx(goal.0, goal.1) { 1.0 } else { 0.0 }; 4]).collect();
    let safety: Vec<Vec<f64>> = (0..ns)
        .map(|s| vec![if hazards.iter().any(|&(x, y)| idx(x, y) == s) { 0.0 } else { 1.0 }; 4])
        .collect();
    let base = TabularCmdp::from_data(CmdpData {
        num_states: ns,
        num_actions: 4,
        gamma: spec.gamma,
        transition,
        reward,
        utilities: vec![safety],
        thresholds: vec![0.0],
        initial_dist: vec![1.0 / ns as f64; ns],
    })?;
    let slater = soft_value_iteration(&base, base.utility(0), spec.slater_tau, DEFAULT_VI_TOL)?.policy;
    let u_safe = utility_values(&base, &slater)?[0];
    // reward-optimal policy that breaks ties toward safety
    let delta = 1e-6;
    let blended = SaTable::from_fn(ns, 4, |s, a| (base.reward().get(s, a) + delta * base.utility(0).get(s, a)) / (1.0 + delta));
    let (_, greedy) = value_iteration(&base, &blended, DEFAULT_VI_TOL)?;
    let u_greedy = utility_values(&base, &greedy)?[0];
    let b = if u_safe - u_greedy > 1e-9 { 0.5 * (u_safe + u_greedy) } else { 0.9 * u_safe };
    Ok((base.with_thresholds(vec![b])?, slater))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_is_deterministic() {
        let (a, _) = gen_random_cmdp(7, 4, 3, 2, 0.9).unwrap();
        let (b, _) = gen_random_cmdp(7, 4, 3, 2, 0.9).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        let (c, _) = gen_random_cmdp(8, 4, 3, 2, 0.9).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn small_grid() {
        let (m, p) = gen_gridworld(2, 2, 0.9).unwrap();
        assert_eq!((m.num_states(), m.num_actions()), (4, 4));
        let u = utility_values(&m, &p).unwrap();
        assert!(u[0] > m.thresholds()[0]);
    }
}
