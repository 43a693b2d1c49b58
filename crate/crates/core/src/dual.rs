//! Dual function evaluation, constants, and accelerated projected descent.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CmdpError, Result};
use crate::eval::{entropy_augmented_reward, PolicyEvaluator};
use crate::model::{DecisionRule, Policy, SaTable, TabularCmdp};
use crate::npg::{npg_iteration_budget, npg_solve, npg_solve_with_reward, q_gap_bound, NpgConfig, NpgOutcome};
use crate::trace::{SolveRow, SolveTrace};

/// Box [0, upper] of candidate multipliers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualBox {
    pub upper: Vec<f64>,
}

impl DualBox {
    pub fn new(upper: Vec<f64>) -> Result<Self> {
        if let Some(i) = upper.iter().position(|u| !(*u >= 0.0) || !u.is_finite()) {
            return Err(CmdpError::InvalidArgument(format!("box upper[{i}] = {} must be finite and >= 0", upper[i])));
        }
        Ok(DualBox { upper })
    }

    /// upper_i = (2 + 2τ log|A|)/((1−γ)ξ_i).
    pub fn from_slack(slack: &[f64], tau: f64, num_actions: usize, gamma: f64) -> Result<Self> {
        let num = 2.0 + 2.0 * tau * (num_actions as f64).ln();
        Self::new(slack.iter().map(|xi| num / ((1.0 - gamma) * xi)).collect())
    }

    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    pub fn contains(&self, lambda: &[f64]) -> bool {
        lambda.len() == self.upper.len() && lambda.iter().zip(&self.upper).all(|(l, u)| *l >= 0.0 && l <= u)
    }

    pub fn diameter(&self) -> f64 {
        self.upper.iter().map(|u| u * u).sum::<f64>().sqrt()
    }
}

/// Coordinate-wise median{0, upper_i, λ_i}.
pub fn project_dual(lambda: &[f64], bx: &DualBox) -> Vec<f64> {
    lambda.iter().zip(&bx.upper).map(|(l, u)| l.max(0.0).min(*u)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub lambda_curr: Vec<f64>,
    pub lambda_prev: Vec<f64>,
    pub t: usize,
}

impl DualState {
    pub fn new(lambda0: Vec<f64>) -> Self {
        DualState { lambda_prev: lambda0.clone(), lambda_curr: lambda0, t: 0 }
    }

    /// β_t = (t−1)/(t+2), taken literally (β₀ = −1/2).
    pub fn momentum(&self) -> f64 {
        (self.t as f64 - 1.0) / (self.t as f64 + 2.0)
    }

    /// μ = λ + β_t(λ − λ_prev).
    pub fn extrapolate(&self) -> Vec<f64> {
        let beta = self.momentum();
        self.lambda_curr.iter().zip(&self.lambda_prev).map(|(l, p)| l + beta * (l - p)).collect()
    }

    pub fn advance(&mut self, next: Vec<f64>) {
        self.lambda_prev = std::mem::replace(&mut self.lambda_curr, next);
        self.t += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub ell: f64,
    pub ell_c: f64,
    pub c1: f64,
    pub c2: f64,
    pub d_hat: f64,
    /// Measured Slater slack ξ.
    pub slack: Vec<f64>,
}

/// ℓ = 2 ln2 (n|A| + (1−γ)²√(n|A|)) / (τ(1−γ)³ d̂).
pub fn dual_smoothness(n: usize, num_actions: usize, gamma: f64, tau: f64, d_hat: f64) -> f64 {
    let na = (n * num_actions) as f64;
    let g1 = 1.0 - gamma;
    2.0 * std::f64::consts::LN_2 * (na + g1 * g1 * na.sqrt()) / (tau * g1.powi(3) * d_hat)
}

/// ℓ_c = √|A|/(1−γ)².
pub fn value_lipschitz(num_actions: usize, gamma: f64) -> f64 {
    (num_actions as f64).sqrt() / (1.0 - gamma).powi(2)
}

/// C₁ = √(2(1−γ) ln2/(τ d̂)).
pub fn conversion_c1(gamma: f64, tau: f64, d_hat: f64) -> f64 {
    (2.0 * (1.0 - gamma) * std::f64::consts::LN_2 / (tau * d_hat)).sqrt()
}

/// Slack ξ_i = U_{g_i}(ρ) − b_i of a candidate Slater policy.
pub fn slater_slack<P: DecisionRule + ?Sized>(model: &TabularCmdp, slater: &P) -> Result<Vec<f64>> {
    let u = PolicyEvaluator::new(model, slater)?.utilities()?;
    Ok(u.iter().zip(model.thresholds()).map(|(u, b)| u - b).collect())
}

pub fn compute_constants<P: DecisionRule + ?Sized>(model: &TabularCmdp, slater: &P, tau: f64) -> Result<Constants> {
    let n = model.num_constraints();
    if n == 0 {
        return Err(CmdpError::InvalidArgument("constants need at least one constraint".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(CmdpError::InvalidArgument(format!("tau = {tau} must be > 0")));
    }
    model.require_interior_initial_dist()?;
    let slack = slater_slack(model, slater)?;
    if let Some(i) = slack.iter().position(|x| !(*x > 0.0)) {
        return Err(CmdpError::Infeasible(format!(
            "Slater policy is not strictly feasible: slack of constraint {i} is {}",
            slack[i]
        )));
    }
    let gamma = model.gamma();
    let na = model.num_actions();
    let d_hat = model.d_hat();
    let c2 = (2.0 + 2.0 * tau * (na as f64).ln()) / (1.0 - gamma) * slack.iter().map(|x| 1.0 / x).sum::<f64>();
    Ok(Constants {
        ell: dual_smoothness(n, na, gamma, tau, d_hat),
        ell_c: value_lipschitz(na, gamma),
        c1: conversion_c1(gamma, tau, d_hat),
        c2,
        d_hat,
        slack,
    })
}

impl Constants {
    pub fn dual_box(&self, tau: f64, num_actions: usize, gamma: f64) -> Result<DualBox> {
        DualBox::from_slack(&self.slack, tau, num_actions, gamma)
    }

    /// 2·(√n|A|/(1−γ)²)·ε for a certified inner log-error ε.
    pub fn inexactness_allowance(n: usize, num_actions: usize, gamma: f64, log_error: f64) -> f64 {
        2.0 * gradient_error_bound(n, num_actions, gamma, log_error)
    }
}

/// √n|A|ε/(1−γ)².
pub fn gradient_error_bound(n: usize, num_actions: usize, gamma: f64, log_error: f64) -> f64 {
    (n as f64).sqrt() * num_actions as f64 * log_error / (1.0 - gamma).powi(2)
}

/// Inner NPG budget for the dual evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerBudget {
    pub max_iters: usize,
    pub stop_tol: Option<f64>,
}

impl InnerBudget {
    pub fn fixed(max_iters: usize) -> Self {
        InnerBudget { max_iters, stop_tol: None }
    }

    pub fn with_stop_tol(max_iters: usize, tol: f64) -> Self {
        InnerBudget { max_iters, stop_tol: Some(tol) }
    }
}

#[derive(Clone, Debug)]
pub struct DualEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub policy: Policy,
    pub utilities: Vec<f64>,
    /// V_τ^{π̃}(ρ) under the base reward.
    pub soft_objective: f64,
    pub inner_iters: usize,
    pub certified_log_error: Option<f64>,
}

impl DualEval {
    pub fn grad_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_violation(&self) -> f64 {
        self.gradient.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max)
    }
}

fn signed_lagrangian_reward(model: &TabularCmdp, lambda: &[f64]) -> Result<SaTable> {
    if lambda.len() != model.num_constraints() || lambda.iter().any(|l| !l.is_finite()) {
        return Err(CmdpError::Shape(format!(
            "lambda must have {} finite entries",
            model.num_constraints()
        )));
    }
    let mut r = model.reward().clone();
    for (l, g) in lambda.iter().zip(model.utilities()) {
        for s in 0..model.num_states() {
            for a in 0..model.num_actions() {
                r.set(s, a, r.get(s, a) + l * g.get(s, a));
            }
        }
    }
    Ok(r)
}

/// Evaluates D̃ and ∇̃D at any finite λ; the extrapolated points of the
/// accelerated scheme may leave the box.
fn dual_eval_any(model: &TabularCmdp, lambda: &[f64], tau: f64, warm: &Policy, inner: &InnerBudget) -> Result<DualEval> {
    let r = signed_lagrangian_reward(model, lambda)?;
    let mut cfg = NpgConfig::new(tau, inner.max_iters);
    cfg.stop_tol = inner.stop_tol;
    let out = npg_solve_reward(model, warm, &r, &cfg)?;
    let ev = PolicyEvaluator::new(model, &out.policy)?;
    let soft_objective = ev.value(&entropy_augmented_reward(model.reward(), &out.policy, tau))?.at(model.initial_dist());
    let utilities = ev.utilities()?;
    let gradient: Vec<f64> = utilities.iter().zip(model.thresholds()).map(|(u, b)| u - b).collect();
    let value = soft_objective + lambda.iter().zip(&gradient).map(|(l, g)| l * g).sum::<f64>();
    Ok(DualEval {
        value,
        gradient,
        soft_objective,
        utilities,
        inner_iters: out.iterations(),
        certified_log_error: out.certified_log_error,
        policy: out.policy,
    })
}

fn npg_solve_reward(model: &TabularCmdp, warm: &Policy, r: &SaTable, cfg: &NpgConfig) -> Result<NpgOutcome> {
    npg_solve_with_reward(model, warm, r, cfg, None)
}

/// D̃(λ) = V_τ^{π̃}(ρ) + λᵀ(U^{π̃} − b) and ∇̃D(λ) = U^{π̃} − b, where π̃ is the
/// inner NPG solution warm-started from `warm`.
pub fn dual_value_and_gradient(
    model: &TabularCmdp,
    lambda: &[f64],
    tau: f64,
    warm: &Policy,
    inner: &InnerBudget,
) -> Result<DualEval> {
    if let Some(i) = lambda.iter().position(|l| !(*l >= 0.0)) {
        return Err(CmdpError::InvalidArgument(format!("lambda[{i}] = {} must be >= 0", lambda[i])));
    }
    dual_eval_any(model, lambda, tau, warm, inner)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum StepRule {
    /// α = 1/ℓ.
    Theoretical,
    Fixed(f64),
    /// α = 1/ℓ̂ with ℓ̂ from [`estimate_local_smoothness`].
    Practical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum DualInit {
    Zero,
    Random(u64),
    Given(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentOptions {
    pub step: StepRule,
    pub init: DualInit,
    /// Applied to both inner and recovery solves.
    pub inner_stop_tol: Option<f64>,
    pub record_wall_time: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions { step: StepRule::Theoretical, init: DualInit::Zero, inner_stop_tol: None, record_wall_time: false }
    }
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub policy: Policy,
    pub lambda: Vec<f64>,
    pub trace: SolveTrace,
    pub step_size: f64,
    pub final_eval: DualEval,
}

fn initial_lambda(init: &DualInit, bx: &DualBox) -> Result<Vec<f64>> {
    match init {
        DualInit::Zero => Ok(vec![0.0; bx.dim()]),
        DualInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(bx.upper.iter().map(|u| rng.gen::<f64>() * u).collect())
        }
        DualInit::Given(l) => {
            if l.len() != bx.dim() {
                return Err(CmdpError::Shape("initial lambda has wrong length".into()));
            }
            Ok(project_dual(l, bx))
        }
    }
}

pub fn resolve_step(
    model: &TabularCmdp,
    tau: f64,
    bx: &DualBox,
    constants: &Constants,
    step: &StepRule,
    inner: &InnerBudget,
) -> Result<f64> {
    match step {
        StepRule::Theoretical => Ok(1.0 / constants.ell),
        StepRule::Fixed(a) if *a > 0.0 && a.is_finite() => {
            if *a > 1.0 / constants.ell {
                log::warn!("step size {a} exceeds 1/ell = {}; convergence guarantee does not apply", 1.0 / constants.ell);
            }
            Ok(*a)
        }
        StepRule::Fixed(a) => Err(CmdpError::InvalidArgument(format!("step size {a} must be > 0"))),
        StepRule::Practical => {
            let l = estimate_local_smoothness(model, tau, bx, inner)?;
            log::info!("practical step: estimated smoothness {l} (theoretical {})", constants.ell);
            Ok(1.0 / l)
        }
    }
}

fn row_from(iter: usize, lambda: &[f64], ev: &DualEval, inner_iters: usize, start: Option<Instant>, allowance: f64) -> SolveRow {
    SolveRow {
        iter,
        lambda: lambda.to_vec(),
        dual_value: ev.value,
        grad_norm: ev.grad_norm(),
        max_violation: ev.max_violation(),
        soft_objective: ev.soft_objective,
        inner_iters,
        wall_ms: start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3),
        allowance,
    }
}

pub fn accelerated_dual_descent(
    model: &TabularCmdp,
    tau: f64,
    bx: &DualBox,
    constants: &Constants,
    n1: usize,
    inner_budget: usize,
    recover_budget: usize,
) -> Result<DescentResult> {
    accelerated_dual_descent_with(model, tau, bx, constants, n1, inner_budget, recover_budget, &DescentOptions::default())
}

/// Accelerated projected gradient descent on D̃ with warm-started NPG inner
/// solves, followed by policy recovery at λ^{(N₁)}.
///
/// Trace row t describes λ^{(t)}; the last row (t = N₁) is the recovery solve.
#[allow(clippy::too_many_arguments)]
pub fn accelerated_dual_descent_with(
    model: &TabularCmdp,
    tau: f64,
    bx: &DualBox,
    constants: &Constants,
    n1: usize,
    inner_budget: usize,
    recover_budget: usize,
    options: &DescentOptions,
) -> Result<DescentResult> {
    let n = model.num_constraints();
    if n1 == 0 {
        return Err(CmdpError::InvalidArgument("n1 must be >= 1".into()));
    }
    if bx.dim() != n {
        return Err(CmdpError::Shape(format!("box has {} coordinates, model has {n} constraints", bx.dim())));
    }
    let (na, gamma) = (model.num_actions(), model.gamma());
    let start = options.record_wall_time.then(Instant::now);
    let inner = InnerBudget { max_iters: inner_budget, stop_tol: options.inner_stop_tol };
    let recover = InnerBudget { max_iters: recover_budget, stop_tol: options.inner_stop_tol };
    let alpha = resolve_step(model, tau, bx, constants, &options.step, &inner)?;
    let allowance_of = |ev: &DualEval| {
        ev.certified_log_error
            .map_or(f64::INFINITY, |e| Constants::inexactness_allowance(n, na, gamma, e))
    };

    let mut state = DualState::new(initial_lambda(&options.init, bx)?);
    let mut warm = Policy::uniform(model.num_states(), na);
    let mut trace = SolveTrace::new(n);
    let mut last: Option<(f64, f64)> = None;
    let mut warned = false;
    for t in 0..n1 {
        let mu = state.extrapolate();
        let ev_mu = dual_eval_any(model, &mu, tau, &warm, &inner)?;
        warm = ev_mu.policy.clone();
        let (ev_lam, iters) = if mu == state.lambda_curr {
            (ev_mu.clone(), ev_mu.inner_iters)
        } else {
            let e = dual_eval_any(model, &state.lambda_curr, tau, &warm, &inner)?;
            let it = e.inner_iters + ev_mu.inner_iters;
            (e, it)
        };
        let allowance = allowance_of(&ev_lam);
        if let Some((prev, prev_allow)) = last {
            if ev_lam.value > prev + prev_allow.max(allowance) {
                let msg = format!("dual value increased at iteration {t}: {prev} -> {}", ev_lam.value);
                if !warned {
                    log::warn!("{msg}");
                    warned = true;
                }
                trace.warnings.push(msg);
            }
        }
        last = Some((ev_lam.value, allowance));
        trace.rows.push(row_from(t, &state.lambda_curr, &ev_lam, iters, start, allowance));
        let next: Vec<f64> = mu.iter().zip(&ev_mu.gradient).map(|(m, g)| m - alpha * g).collect();
        state.advance(project_dual(&next, bx));
    }
    let final_eval = dual_eval_any(model, &state.lambda_curr, tau, &warm, &recover)?;
    let allowance = allowance_of(&final_eval);
    trace.rows.push(row_from(n1, &state.lambda_curr, &final_eval, final_eval.inner_iters, start, allowance));
    Ok(DescentResult {
        policy: final_eval.policy.clone(),
        lambda: state.lambda_curr,
        trace,
        step_size: alpha,
        final_eval,
    })
}

/// Largest gradient-difference ratio ‖∇̃D(a) − ∇̃D(b)‖/‖a − b‖ found by
/// refining 11-point grids along each coordinate axis (and the box diagonal
/// when n > 1), zooming into the steepest secant until the spacing drops
/// below τ/10.
pub fn estimate_local_smoothness(model: &TabularCmdp, tau: f64, bx: &DualBox, inner: &InnerBudget) -> Result<f64> {
    let n = bx.dim();
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = bx.upper[i];
            d
        })
        .collect();
    if n > 1 {
        dirs.push(bx.upper.clone());
    }
    let mut best: f64 = 0.0;
    let mut warm = Policy::uniform(model.num_states(), model.num_actions());
    for d in dirs {
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _level in 0..8 {
            let pts: Vec<f64> = (0..=10).map(|k| lo + (hi - lo) * k as f64 / 10.0).collect();
            let mut grads = Vec::with_capacity(pts.len());
            for &s in &pts {
                let lam: Vec<f64> = d.iter().map(|x| s * x).collect();
                let ev = dual_eval_any(model, &lam, tau, &warm, inner)?;
                warm = ev.policy.clone();
                grads.push(ev.gradient);
            }
            let step = (pts[1] - pts[0]) * len;
            let (mut imax, mut smax) = (0, 0.0);
            for i in 0..10 {
                let diff = grads[i + 1].iter().zip(&grads[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let slope = diff / step;
                if slope > smax {
                    smax = slope;
                    imax = i;
                }
            }
            best = best.max(smax);
            if step < tau / 10.0 {
                break;
            }
            lo = pts[imax.saturating_sub(1)];
            hi = pts[(imax + 2).min(10)];
        }
    }
    if !(best > 0.0) {
        // flat dual on every probed line; any step works
        return Ok(1.0);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct StandardReport {
    pub tau: f64,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    /// Unregularized V^π(ρ).
    pub value: f64,
    pub utilities: Vec<f64>,
    pub violations: Vec<f64>,
    pub max_violation: f64,
    pub duality_gap_allowance: f64,
    pub theoretical_outer_iters: f64,
    pub outer_iters: usize,
    pub capped: bool,
    pub inner_budget: usize,
    pub recover_budget: usize,
    pub step_size: f64,
    pub constants: Option<Constants>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StandardOptions {
    pub step: StepRule,
    pub max_outer: usize,
    pub max_inner: usize,
    pub inner_stop_tol: Option<f64>,
}

impl Default for StandardOptions {
    fn default() -> Self {
        StandardOptions { step: StepRule::Practical, max_outer: 1000, max_inner: 2000, inner_stop_tol: Some(1e-12) }
    }
}

#[derive(Clone, Debug)]
pub struct StandardSolution {
    pub policy: Policy,
    pub report: StandardReport,
    pub trace: Option<SolveTrace>,
}

/// Solves the unregularized CMDP via the regularized dual with
/// τ = (1−γ)ε/(4 log|A|).
pub fn standard_cmdp_solve<P: DecisionRule + ?Sized>(
    model: &TabularCmdp,
    slater: &P,
    epsilon: f64,
    options: &StandardOptions,
) -> Result<StandardSolution> {
    if !(epsilon > 0.0) {
        return Err(CmdpError::InvalidArgument(format!("epsilon = {epsilon} must be > 0")));
    }
    let (ns, na, n, gamma) = (model.num_states(), model.num_actions(), model.num_constraints(), model.gamma());
    let rho = model.initial_dist();
    if na == 1 {
        return finish_unconstrained(model, Policy::uniform(ns, 1), epsilon, 0.0);
    }
    if n == 0 {
        let tau = (1.0 - gamma) * epsilon / (4.0 * (na as f64).ln());
        let budget = npg_iteration_budget(q_gap_bound(0.0, tau, na, gamma), epsilon / 4.0, tau, gamma)?;
        let cfg = NpgConfig::new(tau, budget.clamp(1, options.max_inner)).with_stop_tol(1e-12);
        let out = npg_solve(model, &Policy::uniform(ns, na), &[], &cfg, None)?;
        return finish_unconstrained(model, out.policy, epsilon, tau);
    }
    let tau = (1.0 - gamma) * epsilon / (4.0 * (na as f64).ln());
    let constants = compute_constants(model, slater, tau)?;
    let bx = constants.dual_box(tau, na, gamma)?;
    let radius = bx.diameter();
    let t_plus_1 = constants.ell_c * constants.c1 * constants.c2 * (2.0 * constants.ell).sqrt() * (radius + 1.0) / (epsilon / 2.0);
    let theoretical = (t_plus_1 - 1.0).max(1.0);
    let outer = if theoretical > options.max_outer as f64 { options.max_outer } else { theoretical.ceil() as usize };
    let capped = theoretical > options.max_outer as f64;
    if capped {
        log::warn!("outer iterations capped at {outer} (theory asks for {theoretical:.3e})");
    }
    let qgap = q_gap_bound(constants.c2, tau, na, gamma);
    let t = outer as f64;
    let n2_arg = 2.0 * (n as f64).sqrt() * na as f64 * t * (t + 1.0) * (1.0 + constants.c2 + tau * (na as f64).ln())
        / ((1.0 - gamma).powi(3) * tau * constants.ell);
    let inner_budget = ((n2_arg.ln() / (1.0 - gamma)).ceil().max(1.0) as usize).min(options.max_inner);
    let eps1 = epsilon / (4.0 * constants.ell_c);
    let recover_budget = npg_iteration_budget(qgap, eps1 / (n as f64).sqrt(), tau, gamma)?.clamp(1, options.max_inner);
    let descent = accelerated_dual_descent_with(
        model,
        tau,
        &bx,
        &constants,
        outer,
        inner_budget,
        recover_budget,
        &DescentOptions { step: options.step.clone(), init: DualInit::Zero, inner_stop_tol: options.inner_stop_tol, record_wall_time: false },
    )?;
    let ev = PolicyEvaluator::new(model, &descent.policy)?;
    let value = ev.value(model.reward())?.at(rho);
    let utilities = ev.utilities()?;
    let violations: Vec<f64> = utilities.iter().zip(model.thresholds()).map(|(u, b)| (b - u).max(0.0)).collect();
    let max_violation = violations.iter().cloned().fold(0.0, f64::max);
    Ok(StandardSolution {
        report: StandardReport {
            tau,
            epsilon,
            lambda: descent.lambda.clone(),
            value,
            utilities,
            violations,
            max_violation,
            duality_gap_allowance: tau * (na as f64).ln() / (1.0 - gamma),
            theoretical_outer_iters: theoretical,
            outer_iters: outer,
            capped,
            inner_budget,
            recover_budget,
            step_size: descent.step_size,
            constants: Some(constants),
        },
        policy: descent.policy,
        trace: Some(descent.trace),
    })
}

fn finish_unconstrained(model: &TabularCmdp, policy: Policy, epsilon: f64, tau: f64) -> Result<StandardSolution> {
    let na = model.num_actions();
    let ev = PolicyEvaluator::new(model, &policy)?;
    let value = ev.value(model.reward())?.at(model.initial_dist());
    let utilities = ev.utilities()?;
    let violations: Vec<f64> = utilities.iter().zip(model.thresholds()).map(|(u, b)| (b - u).max(0.0)).collect();
    let max_violation = violations.iter().cloned().fold(0.0, f64::max);
    if max_violation > 0.0 && na == 1 {
        return Err(CmdpError::Infeasible(format!("the only policy violates a constraint by {max_violation}")));
    }
    Ok(StandardSolution {
        policy,
        report: StandardReport {
            tau,
            epsilon,
            lambda: vec![0.0; model.num_constraints()],
            value,
            utilities,
            violations,
            max_violation,
            duality_gap_allowance: tau * (na as f64).ln() / (1.0 - model.gamma()),
            theoretical_outer_iters: 0.0,
            outer_iters: 0,
            capped: false,
            inner_budget: 0,
            recover_budget: 0,
            step_size: 0.0,
            constants: None,
        },
        trace: None,
    })
}
