//! Tabular CMDP and policy data model.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CmdpError, Result};

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const POLICY_ROW_TOL: f64 = 1e-10;

/// Dense table indexed by (state, action).
#[derive(Clone, Debug, PartialEq)]
pub struct SaTable {
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

pub type QTable = SaTable;
pub type RewardTable = SaTable;

impl SaTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        SaTable { num_states, num_actions, data: vec![value; num_states * num_actions] }
    }

    pub fn from_flat(num_states: usize, num_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_states * num_actions {
            return Err(CmdpError::Shape(format!(
                "expected {}x{} = {} entries, got {}",
                num_states,
                num_actions,
                num_states * num_actions,
                data.len()
            )));
        }
        Ok(SaTable { num_states, num_actions, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, |r| r.len());
        if let Some((s, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != num_actions) {
            return Err(CmdpError::Shape(format!(
                "row {} has {} entries, expected {}",
                s,
                r.len(),
                num_actions
            )));
        }
        Ok(SaTable { num_states, num_actions, data: rows.concat() })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                data.push(f(s, a));
            }
        }
        SaTable { num_states, num_actions, data }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.data[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.num_actions.max(1)).map(|c| c.to_vec()).collect()
    }

    pub fn max_abs_diff(&self, other: &SaTable) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &SaTable) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

/// Per-state values.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub v: Vec<f64>,
}

impl ValueTable {
    /// Contract against a state distribution, e.g. V(ρ).
    pub fn at(&self, dist: &[f64]) -> f64 {
        self.v.iter().zip(dist).map(|(v, p)| v * p).sum()
    }
}

/// Discounted state visitation distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationDistribution {
    pub d: Vec<f64>,
}

/// Anything that yields a (state, action) probability table.
pub trait DecisionRule {
    fn probs(&self) -> &SaTable;
}

impl DecisionRule for SaTable {
    fn probs(&self) -> &SaTable {
        self
    }
}

/// Soft-max class policy, stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    log_prob: SaTable,
    prob: SaTable,
}

impl Policy {
    /// Normalizes arbitrary finite logits per state by log-sum-exp.
    pub fn from_logits(mut logits: SaTable) -> Result<Self> {
        if logits.num_actions == 0 {
            return Err(CmdpError::InvalidArgument("policy needs at least one action".into()));
        }
        for s in 0..logits.num_states {
            let row = logits.row_mut(s);
            if row.iter().any(|x| !x.is_finite()) {
                return Err(CmdpError::InvalidArgument(format!("non-finite logit in state {s}")));
            }
            let lse = log_sum_exp(row);
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        Ok(Self::from_log_normalized(logits))
    }

    fn from_log_normalized(log_prob: SaTable) -> Self {
        let prob = SaTable { data: log_prob.data.iter().map(|x| x.exp()).collect(), ..log_prob.clone() };
        Policy { log_prob, prob }
    }

    /// Rejects zero or negative entries and rows not summing to one.
    pub fn from_probs(probs: SaTable) -> Result<Self> {
        for s in 0..probs.num_states {
            let row = probs.row(s);
            if let Some(a) = row.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
                return Err(CmdpError::InvalidArgument(format!(
                    "policy probability ({s},{a}) = {} is not strictly positive",
                    row[a]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(CmdpError::InvalidArgument(format!("policy row {s} sums to {sum}")));
            }
        }
        let logits = SaTable { data: probs.data.iter().map(|p| p.ln()).collect(), ..probs };
        Self::from_logits(logits)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let lp = -(num_actions as f64).ln();
        Self::from_log_normalized(SaTable::filled(num_states, num_actions, lp))
    }

    pub fn num_states(&self) -> usize {
        self.log_prob.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.log_prob.num_actions
    }

    pub fn log_probs(&self) -> &SaTable {
        &self.log_prob
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.prob.get(s, a)
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.log_prob.get(s, a)
    }

    /// Sup-norm distance between log-probability tables.
    pub fn log_distance(&self, other: &Policy) -> f64 {
        self.log_prob.max_abs_diff(&other.log_prob)
    }
}

impl DecisionRule for Policy {
    fn probs(&self) -> &SaTable {
        &self.prob
    }
}

/// Row-stochastic table that may contain zeros (e.g. LP-recovered policies).
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    prob: SaTable,
}

impl PolicyTable {
    pub fn new(prob: SaTable) -> Result<Self> {
        for s in 0..prob.num_states {
            let row = prob.row(s);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(CmdpError::InvalidArgument(format!("policy row {s} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(CmdpError::InvalidArgument(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(PolicyTable { prob })
    }

    pub fn into_table(self) -> SaTable {
        self.prob
    }
}

impl DecisionRule for PolicyTable {
    fn probs(&self) -> &SaTable {
        &self.prob
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// On-disk JSON form of a CMDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmdpData {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    #[serde(default)]
    pub utilities: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    pub initial_dist: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub message: String,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, message: String, residual: Option<f64>) {
        self.violations.push(Violation { message, residual });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return write!(f, "pass");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Checks every structural and range invariant and lists the violations.
pub fn validate_model(data: &CmdpData) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (ns, na) = (data.num_states, data.num_actions);
    if ns == 0 {
        rep.push("num_states must be positive".into(), None);
    }
    if na == 0 {
        rep.push("num_actions must be positive".into(), None);
    }
    if !(data.gamma >= 0.0 && data.gamma < 1.0) {
        rep.push(format!("gamma = {} outside [0, 1)", data.gamma), None);
    }

    if data.transition.len() != ns {
        rep.push(format!("transition has {} states, expected {}", data.transition.len(), ns), None);
    }
    for (s, per_a) in data.transition.iter().enumerate() {
        if per_a.len() != na {
            rep.push(format!("transition[{s}] has {} actions, expected {na}", per_a.len()), None);
            continue;
        }
        for (a, row) in per_a.iter().enumerate() {
            if row.len() != ns {
                rep.push(format!("transition row ({s},{a}) has {} entries, expected {ns}", row.len()), None);
                continue;
            }
            if let Some((sp, &p)) = row.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
                rep.push(format!("transition ({s},{a},{sp}) = {p} is negative or non-finite"), Some(p));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                rep.push(format!("transition row ({s},{a}) sums to {sum}"), Some(sum - 1.0));
            }
        }
    }

    check_table(&mut rep, "reward", &data.reward, ns, na);
    for (i, g) in data.utilities.iter().enumerate() {
        check_table(&mut rep, &format!("utility {i}"), g, ns, na);
    }

    if data.thresholds.len() != data.utilities.len() {
        rep.push(
            format!(
                "thresholds has {} entries but there are {} utilities",
                data.thresholds.len(),
                data.utilities.len()
            ),
            None,
        );
    }
    let bmax = if data.gamma < 1.0 { 1.0 / (1.0 - data.gamma) } else { f64::INFINITY };
    for (i, &b) in data.thresholds.iter().enumerate() {
        if !(b >= 0.0 && b <= bmax) {
            rep.push(format!("threshold {i} = {b} outside [0, {bmax}]"), Some(b));
        }
    }

    if data.initial_dist.len() != ns {
        rep.push(format!("initial_dist has {} entries, expected {ns}", data.initial_dist.len()), None);
    } else {
        if let Some((s, &p)) = data.initial_dist.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            rep.push(format!("initial_dist[{s}] = {p} is negative or non-finite"), Some(p));
        }
        let sum: f64 = data.initial_dist.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            rep.push(format!("initial_dist sums to {sum}"), Some(sum - 1.0));
        }
    }
    rep
}

fn check_table(rep: &mut ValidationReport, name: &str, t: &[Vec<f64>], ns: usize, na: usize) {
    if t.len() != ns {
        rep.push(format!("{name} has {} states, expected {ns}", t.len()), None);
    }
    for (s, row) in t.iter().enumerate() {
        if row.len() != na {
            rep.push(format!("{name}[{s}] has {} actions, expected {na}", row.len()), None);
            continue;
        }
        for (a, &x) in row.iter().enumerate() {
            if !in_unit(x) {
                rep.push(format!("{name} ({s},{a}) = {x} outside [0, 1]"), Some(x));
            }
        }
    }
}

/// Validated tabular CMDP. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularCmdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    // indexed [(s * A + a) * S + s']
    transition: Vec<f64>,
    reward: SaTable,
    utilities: Vec<SaTable>,
    thresholds: Vec<f64>,
    initial_dist: Vec<f64>,
}

impl TabularCmdp {
    pub fn from_data(data: CmdpData) -> Result<Self> {
        let report = validate_model(&data);
        if !report.is_pass() {
            return Err(CmdpError::InvalidModel(report));
        }
        let transition = data.transition.iter().flatten().flatten().copied().collect();
        Ok(TabularCmdp {
            num_states: data.num_states,
            num_actions: data.num_actions,
            gamma: data.gamma,
            transition,
            reward: SaTable::from_rows(&data.reward)?,
            utilities: data.utilities.iter().map(|g| SaTable::from_rows(g)).collect::<Result<_>>()?,
            thresholds: data.thresholds,
            initial_dist: data.initial_dist,
        })
    }

    pub fn to_data(&self) -> CmdpData {
        let (ns, na) = (self.num_states, self.num_actions);
        CmdpData {
            num_states: ns,
            num_actions: na,
            gamma: self.gamma,
            transition: (0..ns).map(|s| (0..na).map(|a| self.next_dist(s, a).to_vec()).collect()).collect(),
            reward: self.reward.to_rows(),
            utilities: self.utilities.iter().map(|g| g.to_rows()).collect(),
            thresholds: self.thresholds.clone(),
            initial_dist: self.initial_dist.clone(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let data: CmdpData = serde_json::from_str(s)?;
        Self::from_data(data)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_data()).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CmdpError::io(path, e))?;
        let data: CmdpData = serde_json::from_str(&text).map_err(|e| CmdpError::parse(path, &e))?;
        Self::from_data(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| CmdpError::io(path, e))
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_constraints(&self) -> usize {
        self.utilities.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// P(·|s,a).
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.num_states;
        let start = (s * self.num_actions + a) * ns;
        &self.transition[start..start + ns]
    }

    pub fn reward(&self) -> &RewardTable {
        &self.reward
    }

    pub fn utility(&self, i: usize) -> &RewardTable {
        &self.utilities[i]
    }

    pub fn utilities(&self) -> &[RewardTable] {
        &self.utilities
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// d̂ = (1−γ)·min_s ρ(s), the certified visitation floor.
    pub fn d_hat(&self) -> f64 {
        (1.0 - self.gamma) * self.initial_dist.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Fails unless every ρ(s) > 0.
    pub fn require_interior_initial_dist(&self) -> Result<()> {
        match self.initial_dist.iter().position(|&p| p <= 0.0) {
            Some(s) => Err(CmdpError::InvalidArgument(format!("initial_dist[{s}] is zero; d_hat would vanish"))),
            None => Ok(()),
        }
    }

    /// Copy with replaced thresholds (revalidated).
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> Result<Self> {
        let mut data = self.to_data();
        data.thresholds = thresholds;
        Self::from_data(data)
    }

    /// Copy with replaced utilities and thresholds (revalidated).
    pub fn with_constraints(&self, utilities: Vec<Vec<Vec<f64>>>, thresholds: Vec<f64>) -> Result<Self> {
        let mut data = self.to_data();
        data.utilities = utilities;
        data.thresholds = thresholds;
        Self::from_data(data)
    }

    pub fn check_reward_shape(&self, t: &SaTable) -> Result<()> {
        if t.shape() != (self.num_states, self.num_actions) {
            return Err(CmdpError::Shape(format!(
                "table is {:?}, model is ({}, {})",
                t.shape(),
                self.num_states,
                self.num_actions
            )));
        }
        if t.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(CmdpError::InvalidArgument("table has non-finite entries".into()));
        }
        Ok(())
    }
}
