//! Tabular constrained MDPs with entropy regularization: exact evaluation,
//! soft natural policy gradient, accelerated dual descent, dual bisection,
//! and independent oracles for verification.

pub mod bench;
pub mod bisection;
pub mod dual;
pub mod error;
pub mod eval;
pub mod invariants;
pub mod model;
pub mod npg;
pub mod oracles;
pub mod trace;

pub use error::{CmdpError, Result};
pub use model::{CmdpData, DecisionRule, Policy, PolicyTable, SaTable, TabularCmdp, ValueTable};
