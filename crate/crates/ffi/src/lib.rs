//! C interface to cmdp-core.
//!
//! Every fallible function returns a [`CmdpStatus`]; on failure a message is
//! available from [`cmdp_last_error_message`] on the same thread. Objects
//! handed out through `out` pointers are owned by the caller and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cmdp_core::bench::{gen_gridworld, gen_random_cmdp};
use cmdp_core::bisection::{bisection_solve, BisectionConfig};
use cmdp_core::dual::{
    accelerated_dual_descent_with, compute_constants, standard_cmdp_solve, DescentOptions, StandardOptions, StepRule,
};
use cmdp_core::eval::{evaluate_soft_value, evaluate_value, utility_values};
use cmdp_core::oracles::occupancy_lp_solve;
use cmdp_core::{CmdpError, DecisionRule, Policy, SaTable, TabularCmdp};

/// Opaque model handle.
pub struct CmdpModel {
    inner: TabularCmdp,
}

/// Opaque policy handle (strictly positive probabilities).
pub struct CmdpPolicy {
    inner: Policy,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Infeasible = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// Options for [`cmdp_solve_dual`]. Obtain defaults from
/// [`cmdp_dual_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CmdpDualOptions {
    pub tau: f64,
    /// Outer iterations N₁.
    pub outer_iters: usize,
    pub inner_budget: usize,
    pub recover_budget: usize,
    /// > 0: fixed step; 0: 1/ℓ; < 0: estimated local smoothness.
    pub step_size: f64,
    /// <= 0 disables the early exit of the inner solves.
    pub inner_stop_tol: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CmdpStandardReport {
    pub tau: f64,
    /// Unregularized V^π(ρ).
    pub value: f64,
    pub max_violation: f64,
    pub duality_gap_allowance: f64,
    pub outer_iters: usize,
    /// 1 when the outer iteration count was capped.
    pub capped: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &CmdpError) -> CmdpStatus {
    match err {
        CmdpError::InvalidModel(_) => CmdpStatus::InvalidModel,
        CmdpError::InvalidArgument(_) | CmdpError::Shape(_) | CmdpError::Config(_) => CmdpStatus::InvalidArgument,
        CmdpError::Infeasible(_) => CmdpStatus::Infeasible,
        CmdpError::Io { .. } => CmdpStatus::Io,
        CmdpError::Parse { .. } | CmdpError::Json(_) | CmdpError::Csv(_) => CmdpStatus::Parse,
        CmdpError::Singular | CmdpError::Internal(_) => CmdpStatus::Internal,
    }
}

struct Failure(CmdpStatus, String);

impl From<CmdpError> for Failure {
    fn from(e: CmdpError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> CmdpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmdpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CmdpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CmdpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CmdpStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn write_slice(out: *mut f64, len: usize, data: &[f64]) -> FfiResult {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < data.len() {
        return Err(Failure(
            CmdpStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", data.len()),
        ));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    Ok(())
}

fn boxed_model(m: TabularCmdp) -> *mut CmdpModel {
    Box::into_raw(Box::new(CmdpModel { inner: m }))
}

fn boxed_policy(p: Policy) -> *mut CmdpPolicy {
    Box::into_raw(Box::new(CmdpPolicy { inner: p }))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next cmdp_* call on the same thread.
#[no_mangle]
pub extern "C" fn cmdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model from its JSON representation.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_from_json(json: *const c_char, out: *mut *mut CmdpModel) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = TabularCmdp::from_json_str(c_str(json, "json")?)?;
        *out = boxed_model(m);
        Ok(())
    })
}

/// Loads a model from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_load(path: *const c_char, out: *mut *mut CmdpModel) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = TabularCmdp::load(c_str(path, "path")?)?;
        *out = boxed_model(m);
        Ok(())
    })
}

/// Serializes a model to JSON; free the string with [`cmdp_string_free`].
///
/// # Safety
/// `model` must come from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_to_json(model: *const CmdpModel, out: *mut *mut c_char) -> CmdpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = out_ptr(out, "out")?;
        let s = CString::new(m.inner.to_json_string()).map_err(|e| Failure(CmdpStatus::Internal, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// Random instance with a certified Slater policy. `out_slater` may be null.
///
/// # Safety
/// `out_model` must be valid; `out_slater` valid or null.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_gen_random(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    num_constraints: usize,
    gamma: f64,
    out_model: *mut *mut CmdpModel,
    out_slater: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out_model, "out_model")?;
        let (m, p) = gen_random_cmdp(seed, num_states, num_actions, num_constraints, gamma)?;
        *out = boxed_model(m);
        if let Some(s) = out_slater.as_mut() {
            *s = boxed_policy(p);
        }
        Ok(())
    })
}

/// Gridworld with one hazard next to the goal. `out_slater` may be null.
///
/// # Safety
/// `out_model` must be valid; `out_slater` valid or null.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_gen_gridworld(
    width: usize,
    height: usize,
    gamma: f64,
    out_model: *mut *mut CmdpModel,
    out_slater: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out_model, "out_model")?;
        let (m, p) = gen_gridworld(width, height, gamma)?;
        *out = boxed_model(m);
        if let Some(s) = out_slater.as_mut() {
            *s = boxed_policy(p);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_free(model: *mut CmdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sizes and discount of a model. Any output pointer may be null.
///
/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cmdp_model_dims(
    model: *const CmdpModel,
    num_states: *mut usize,
    num_actions: *mut usize,
    num_constraints: *mut usize,
    gamma: *mut f64,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        if let Some(x) = num_states.as_mut() {
            *x = m.num_states();
        }
        if let Some(x) = num_actions.as_mut() {
            *x = m.num_actions();
        }
        if let Some(x) = num_constraints.as_mut() {
            *x = m.num_constraints();
        }
        if let Some(x) = gamma.as_mut() {
            *x = m.gamma();
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_policy_uniform(num_states: usize, num_actions: usize, out: *mut *mut CmdpPolicy) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if num_states == 0 || num_actions == 0 {
            return Err(Failure(CmdpStatus::InvalidArgument, "policy dimensions must be positive".into()));
        }
        *out = boxed_policy(Policy::uniform(num_states, num_actions));
        Ok(())
    })
}

/// Policy from a row-major (state, action) probability table with strictly
/// positive rows summing to one.
///
/// # Safety
/// `probs` must point to `num_states * num_actions` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_policy_from_probs(
    num_states: usize,
    num_actions: usize,
    probs: *const f64,
    out: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let data = std::slice::from_raw_parts(probs, num_states * num_actions).to_vec();
        let p = Policy::from_probs(SaTable::from_flat(num_states, num_actions, data)?)?;
        *out = boxed_policy(p);
        Ok(())
    })
}

/// Copies the row-major probability table into `out` (`len` doubles).
///
/// # Safety
/// `policy` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmdp_policy_probs(policy: *const CmdpPolicy, out: *mut f64, len: usize) -> CmdpStatus {
    guard(|| {
        let p = deref(policy, "policy")?;
        write_slice(out, len, p.inner.probs().as_slice())
    })
}

/// # Safety
/// `policy` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmdp_policy_free(policy: *mut CmdpPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// # Safety
/// `s` must come from this library (or be null).
#[no_mangle]
pub unsafe extern "C" fn cmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// V^π(ρ) for the model's reward; with `tau > 0` the entropy-regularized value.
///
/// # Safety
/// Handles must come from this library; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_evaluate_value(
    model: *const CmdpModel,
    policy: *const CmdpPolicy,
    tau: f64,
    out: *mut f64,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let p = &deref(policy, "policy")?.inner;
        let out = out_ptr(out, "out")?;
        let v = if tau > 0.0 {
            evaluate_soft_value(m, p, m.reward(), tau)?
        } else {
            evaluate_value(m, p, m.reward())?
        };
        *out = v.at(m.initial_dist());
        Ok(())
    })
}

/// U_{g_i}^π(ρ) for every constraint, written to `out` (`len` ≥ n doubles).
///
/// # Safety
/// Handles must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmdp_evaluate_utilities(
    model: *const CmdpModel,
    policy: *const CmdpPolicy,
    out: *mut f64,
    len: usize,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let p = &deref(policy, "policy")?.inner;
        let u = utility_values(m, p)?;
        if u.is_empty() {
            return Ok(());
        }
        write_slice(out, len, &u)
    })
}

#[no_mangle]
pub extern "C" fn cmdp_dual_options_default() -> CmdpDualOptions {
    CmdpDualOptions {
        tau: 0.1,
        outer_iters: 200,
        inner_budget: 2000,
        recover_budget: 2000,
        step_size: -1.0,
        inner_stop_tol: 1e-12,
    }
}

fn step_rule(step: f64) -> StepRule {
    if step > 0.0 {
        StepRule::Fixed(step)
    } else if step == 0.0 {
        StepRule::Theoretical
    } else {
        StepRule::Practical
    }
}

/// Accelerated dual descent. Writes λ (n doubles) to `lambda_out` and the
/// recovered policy to `out_policy`.
///
/// # Safety
/// Handles must come from this library; `options` valid; `lambda_out` must
/// hold `lambda_len` doubles (may be null when n = 0); `out_policy` valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_solve_dual(
    model: *const CmdpModel,
    slater: *const CmdpPolicy,
    options: *const CmdpDualOptions,
    lambda_out: *mut f64,
    lambda_len: usize,
    out_policy: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let s = &deref(slater, "slater")?.inner;
        let o = *deref(options, "options")?;
        let out = out_ptr(out_policy, "out_policy")?;
        let c = compute_constants(m, s, o.tau)?;
        let bx = c.dual_box(o.tau, m.num_actions(), m.gamma())?;
        let opts = DescentOptions {
            step: step_rule(o.step_size),
            inner_stop_tol: (o.inner_stop_tol > 0.0).then_some(o.inner_stop_tol),
            ..Default::default()
        };
        let res = accelerated_dual_descent_with(m, o.tau, &bx, &c, o.outer_iters, o.inner_budget, o.recover_budget, &opts)?;
        if !res.lambda.is_empty() {
            write_slice(lambda_out, lambda_len, &res.lambda)?;
        }
        *out = boxed_policy(res.policy);
        Ok(())
    })
}

/// Bisection on the single multiplier with budgets derived from `epsilon`
/// (gradient threshold) and `epsilon1` (recovery accuracy).
///
/// # Safety
/// Handles must come from this library; `lambda_out` and `out_policy` valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_solve_bisection(
    model: *const CmdpModel,
    slater: *const CmdpPolicy,
    tau: f64,
    epsilon: f64,
    epsilon1: f64,
    lambda_out: *mut f64,
    out_policy: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let s = &deref(slater, "slater")?.inner;
        let lam = out_ptr(lambda_out, "lambda_out")?;
        let out = out_ptr(out_policy, "out_policy")?;
        if m.num_constraints() != 1 {
            return Err(Failure(CmdpStatus::InvalidArgument, "bisection requires exactly one constraint".into()));
        }
        let c = compute_constants(m, s, tau)?;
        let cfg = BisectionConfig::from_constants(m, &c, tau, epsilon, epsilon1)?;
        let res = bisection_solve(m, tau, &cfg)?;
        *lam = res.lambda;
        *out = boxed_policy(res.policy);
        Ok(())
    })
}

/// Unregularized CMDP at accuracy `epsilon` with default options.
///
/// # Safety
/// Handles must come from this library; `report` and `out_policy` valid.
#[no_mangle]
pub unsafe extern "C" fn cmdp_solve_standard(
    model: *const CmdpModel,
    slater: *const CmdpPolicy,
    epsilon: f64,
    report: *mut CmdpStandardReport,
    out_policy: *mut *mut CmdpPolicy,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let s = &deref(slater, "slater")?.inner;
        let rep = out_ptr(report, "report")?;
        let out = out_ptr(out_policy, "out_policy")?;
        let sol = standard_cmdp_solve(m, s, epsilon, &StandardOptions::default())?;
        let r = &sol.report;
        *rep = CmdpStandardReport {
            tau: r.tau,
            value: r.value,
            max_violation: r.max_violation,
            duality_gap_allowance: r.duality_gap_allowance,
            outer_iters: r.outer_iters,
            capped: r.capped as i32,
        };
        *out = boxed_policy(sol.policy);
        Ok(())
    })
}

/// Optimal value of the unregularized CMDP from the occupancy LP; the optimal
/// (possibly deterministic) policy table is copied to `probs_out` when it is
/// non-null.
///
/// # Safety
/// `model` must come from this library; `value_out` valid; `probs_out` null
/// or holding `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmdp_occupancy_lp(
    model: *const CmdpModel,
    value_out: *mut f64,
    probs_out: *mut f64,
    probs_len: usize,
) -> CmdpStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let v = out_ptr(value_out, "value_out")?;
        let sol = occupancy_lp_solve(m)?;
        if !probs_out.is_null() {
            write_slice(probs_out, probs_len, sol.policy.probs().as_slice())?;
        }
        *v = sol.value;
        Ok(())
    })
}
