use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bisection::{bisection_solve, BisectionConfig};
use crate::dual::{
    accelerated_dual_descent_with, compute_constants, standard_cmdp_solve, DescentOptions, DualInit, StandardOptions,
    StepRule,
};
use crate::error::{CmdpError, Result};
use crate::eval::{evaluate_value, PolicyEvaluator};
use crate::model::{Policy, SaTable, TabularCmdp};
use crate::npg::{npg_iteration_budget, q_gap_bound};
use crate::oracles::{dual_grid_search, occupancy_lp_solve};

use super::generators::{gen_gridworld_spec, gen_random_cmdp_spec, GridworldSpec, RandomCmdpSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InstanceSource {
    File { path: PathBuf },
    Random(RandomCmdpSpec),
    Gridworld(GridworldSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    DualDescent,
    Bisection,
    StandardCmdp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizeSetting {
    Value(f64),
    Named(String),
}

impl StepSizeSetting {
    fn rule(&self) -> Result<StepRule> {
        match self {
            StepSizeSetting::Value(v) => Ok(StepRule::Fixed(*v)),
            StepSizeSetting::Named(s) if s == "theoretical" => Ok(StepRule::Theoretical),
            StepSizeSetting::Named(s) if s == "practical" => Ok(StepRule::Practical),
            StepSizeSetting::Named(s) => {
                Err(CmdpError::Config(format!("step_size {s:?} must be a number, \"theoretical\" or \"practical\"")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    #[serde(default)]
    pub solver: Option<SolverKind>,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Bisection gradient threshold or standard-CMDP accuracy.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Policy-recovery accuracy.
    #[serde(default)]
    pub epsilon1: Option<f64>,
    /// Outer iterations (dual-descent), inner budget (bisection), outer cap (standard).
    #[serde(default)]
    pub n1: Option<usize>,
    /// Inner budget (dual-descent) or recovery budget (bisection).
    #[serde(default)]
    pub n2: Option<usize>,
    /// Recovery budget (dual-descent).
    #[serde(default)]
    pub n3: Option<usize>,
    #[serde(default)]
    pub step_size: Option<StepSizeSetting>,
    #[serde(default)]
    pub inner_stop_tol: Option<f64>,
    #[serde(default)]
    pub init_seed: Option<u64>,
    /// Probability table of a user-supplied Slater policy (defaults to the
    /// generator's, or uniform for file instances).
    #[serde(default)]
    pub slater_policy: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_grid_resolution")]
    pub oracle_resolution: f64,
    /// Off by default so that trace.csv is byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    pub output_dir: PathBuf,
}

fn default_grid_resolution() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CmdpError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CmdpError::parse(path, &e))
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("n1", self.n1), ("n2", self.n2), ("n3", self.n3)] {
            if v == Some(0) {
                return Err(CmdpError::Config(format!("{name} must be positive")));
            }
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(CmdpError::Config(format!("tau = {t} must be > 0")));
            }
        }
        for (name, v) in [("epsilon", self.epsilon), ("epsilon1", self.epsilon1)] {
            if v.is_some_and(|e| !(e > 0.0)) {
                return Err(CmdpError::Config(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    fn tau(&self, solver: &str) -> Result<f64> {
        self.tau.ok_or_else(|| CmdpError::Config(format!("tau is required for {solver}")))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub summary: serde_json::Value,
    pub params: serde_json::Value,
}

fn load_instance(src: &InstanceSource) -> Result<(TabularCmdp, Option<Policy>)> {
    match src {
        InstanceSource::File { path } => Ok((TabularCmdp::load(path)?, None)),
        InstanceSource::Random(spec) => gen_random_cmdp_spec(spec).map(|(m, p)| (m, Some(p))),
        InstanceSource::Gridworld(spec) => gen_gridworld_spec(spec).map(|(m, p)| (m, Some(p))),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CmdpError::io(path, e))
}

/// Runs the configured solver and writes trace.csv, summary.json,
/// params.json and instance.json into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.check()?;
    let solver = config.solver.ok_or_else(|| CmdpError::Config("solver not selected".into()))?;
    let (model, generated_slater) = load_instance(&config.instance)?;
    if solver == SolverKind::Bisection && model.num_constraints() != 1 {
        return Err(CmdpError::Config("bisection requires exactly one constraint".into()));
    }
    let slater = match (&config.slater_policy, generated_slater) {
        (Some(rows), _) => Policy::from_probs(SaTable::from_rows(rows)?)?,
        (None, Some(p)) => p,
        (None, None) => Policy::uniform(model.num_states(), model.num_actions()),
    };
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CmdpError::io(dir, e))?;
    let start = Instant::now();
    let (na, gamma, n) = (model.num_actions(), model.gamma(), model.num_constraints());
    let rho = model.initial_dist();

    let (mut summary, params, trace_csv) = match solver {
        SolverKind::DualDescent => {
            let tau = config.tau("dual-descent")?;
            let constants = compute_constants(&model, &slater, tau)?;
            let bx = constants.dual_box(tau, na, gamma)?;
            let n1 = config.n1.unwrap_or(100);
            let qgap = q_gap_bound(constants.c2, tau, na, gamma);
            let t = n1 as f64;
            let n2 = match config.n2 {
                Some(v) => v,
                None => {
                    let arg = 2.0 * (n as f64).sqrt() * na as f64 * t * (t + 1.0) * (1.0 + constants.c2 + tau * (na as f64).ln())
                        / ((1.0 - gamma).powi(3) * tau * constants.ell);
                    ((arg.ln() / (1.0 - gamma)).ceil().max(1.0)) as usize
                }
            };
            let eps1 = config.epsilon1.unwrap_or(1e-6);
            let n3 = match config.n3 {
                Some(v) => v,
                None => npg_iteration_budget(qgap, eps1 / (n as f64).sqrt(), tau, gamma)?.max(1),
            };
            let step = config.step_size.as_ref().map(|s| s.rule()).transpose()?.unwrap_or(StepRule::Theoretical);
            if let StepRule::Fixed(a) = step {
                log::warn!("using step-size override {a} instead of 1/ell = {}", 1.0 / constants.ell);
            }
            let options = DescentOptions {
                step,
                init: config.init_seed.map_or(DualInit::Zero, DualInit::Random),
                inner_stop_tol: config.inner_stop_tol,
                record_wall_time: config.record_wall_time,
            };
            let res = accelerated_dual_descent_with(&model, tau, &bx, &constants, n1, n2, n3, &options)?;
            let primal = evaluate_value(&model, &res.policy, model.reward())?.at(rho);
            let mut oracle = serde_json::Value::Null;
            if config.oracle {
                let mut o = serde_json::Map::new();
                if n <= 2 {
                    let g = dual_grid_search(&model, tau, &bx, config.oracle_resolution)?;
                    o.insert("grid_lambda_star".into(), json!(g.lambda_star));
                    o.insert("grid_d_star".into(), json!(g.d_star));
                    o.insert("dual_gap".into(), json!(res.final_eval.value - g.d_star));
                }
                if let Ok(lp) = occupancy_lp_solve(&model) {
                    o.insert("lp_value".into(), json!(lp.value));
                    o.insert("primal_gap".into(), json!(lp.value - primal));
                }
                oracle = serde_json::Value::Object(o);
            }
            let summary = json!({
                "solver": "dual-descent",
                "lambda": res.lambda,
                "final_dual_value": res.final_eval.value,
                "grad_norm": res.final_eval.grad_norm(),
                "max_violation": res.final_eval.max_violation(),
                "primal_value": primal,
                "soft_objective": res.final_eval.soft_objective,
                "utilities": res.final_eval.utilities,
                "warnings": res.trace.warnings.len(),
                "oracle": oracle,
            });
            let params = json!({
                "solver": "dual-descent",
                "tau": tau, "gamma": gamma, "num_constraints": n,
                "constants": constants, "box_upper": bx.upper,
                "n1": n1, "n2": n2, "n3": n3, "epsilon1": eps1,
                "step_size": res.step_size, "step_rule": options.step,
                "init": options.init, "inner_stop_tol": options.inner_stop_tol,
            });
            (summary, params, res.trace.to_csv()?)
        }
        SolverKind::Bisection => {
            let tau = config.tau("bisection")?;
            let constants = compute_constants(&model, &slater, tau)?;
            let eps = config.epsilon.unwrap_or(1e-3);
            let eps1 = config.epsilon1.unwrap_or(1e-6);
            let mut bc = BisectionConfig::from_constants(&model, &constants, tau, eps, eps1)?;
            if let Some(v) = config.n1 {
                bc.inner_budget_n1 = v;
            }
            if let Some(v) = config.n2 {
                bc.recover_budget_n2 = v;
            }
            bc.inner_stop_tol = config.inner_stop_tol;
            let res = bisection_solve(&model, tau, &bc)?;
            let primal = evaluate_value(&model, &res.policy, model.reward())?.at(rho);
            let mut oracle = serde_json::Value::Null;
            if config.oracle {
                let bx = crate::dual::DualBox::new(vec![constants.c2])?;
                let g = dual_grid_search(&model, tau, &bx, config.oracle_resolution)?;
                oracle = json!({
                    "grid_lambda_star": g.lambda_star,
                    "grid_d_star": g.d_star,
                    "dual_gap": res.final_eval.value - g.d_star,
                });
            }
            let summary = json!({
                "solver": "bisection",
                "lambda": [res.lambda],
                "final_dual_value": res.final_eval.value,
                "final_gradient": res.final_eval.gradient[0],
                "max_violation": res.final_eval.max_violation(),
                "primal_value": primal,
                "soft_objective": res.final_eval.soft_objective,
                "outer_iters": res.outer_iters,
                "termination": res.termination,
                "interval": [res.interval.0, res.interval.1],
                "oracle": oracle,
            });
            let params = json!({
                "solver": "bisection", "tau": tau, "gamma": gamma,
                "constants": constants, "config": bc,
                "outer_bound": crate::bisection::outer_iteration_bound(constants.ell, constants.c2, eps),
            });
            (summary, params, res.trace.to_csv()?)
        }
        SolverKind::StandardCmdp => {
            let eps = config.epsilon.ok_or_else(|| CmdpError::Config("epsilon is required for standard-cmdp".into()))?;
            let mut opts = StandardOptions::default();
            if let Some(s) = &config.step_size {
                opts.step = s.rule()?;
            }
            if let Some(v) = config.n1 {
                opts.max_outer = v;
            }
            if config.inner_stop_tol.is_some() {
                opts.inner_stop_tol = config.inner_stop_tol;
            }
            let sol = standard_cmdp_solve(&model, &slater, eps, &opts)?;
            let mut oracle = serde_json::Value::Null;
            if config.oracle {
                let lp = occupancy_lp_solve(&model)?;
                oracle = json!({
                    "lp_value": lp.value,
                    "value_gap": (lp.value - sol.report.value).abs(),
                    "empirical_c": (lp.value - sol.report.value).abs().max(sol.report.max_violation) / eps,
                });
            }
            let last = sol.trace.as_ref().and_then(|t| t.rows.last().cloned());
            let summary = json!({
                "solver": "standard-cmdp",
                "lambda": sol.report.lambda,
                "final_dual_value": last.as_ref().map(|r| r.dual_value),
                "max_violation": sol.report.max_violation,
                "primal_value": sol.report.value,
                "duality_gap_allowance": sol.report.duality_gap_allowance,
                "capped": sol.report.capped,
                "oracle": oracle,
            });
            let params = json!({ "solver": "standard-cmdp", "report": sol.report });
            let csv = match &sol.trace {
                Some(t) => t.to_csv()?,
                None => crate::trace::SolveTrace::new(n).to_csv()?,
            };
            (summary, params, csv)
        }
    };
    let wall = start.elapsed().as_secs_f64() * 1e3;
    summary["wall_clock_ms"] = json!(wall);
    let slater_u = PolicyEvaluator::new(&model, &slater)?.utilities()?;
    let mut params = params;
    params["slater_utilities"] = json!(slater_u);
    params["instance"] = serde_json::to_value(&config.instance)?;

    let trace_path = dir.join("trace.csv");
    std::fs::write(&trace_path, trace_csv).map_err(|e| CmdpError::io(&trace_path, e))?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("params.json"), &params)?;
    model.save(dir.join("instance.json"))?;
    Ok(ExperimentOutcome { output_dir: dir.clone(), summary, params })
}
