//! Independent ground truth used for testing and certification.

mod grid;
mod lp;
mod rollout;
pub mod simplex;
mod value_iteration;

pub use grid::{dual_grid_search, dual_value_oracle, GridCertificate, GridResult};
pub use lp::{occupancy_lp_solve, LpSolution, OccupancyMeasure};
pub use rollout::{truncated_rollout_value, truncated_visitation};
pub use value_iteration::{
    soft_value_iteration, soft_value_iteration_from, value_iteration, SoftViOutcome, DEFAULT_VI_TOL,
};
