//! Instance generators, experiment orchestration, and rate fitting.

mod experiment;
mod fit;
mod generators;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentOutcome, InstanceSource, SolverKind, StepSizeSetting,
};
pub use fit::{fit_rate, fit_rate_with, FitOptions, FitResult, RateModel};
pub use generators::{
    gen_gridworld, gen_gridworld_spec, gen_random_cmdp, gen_random_cmdp_spec, random_policy, GridworldSpec,
    RandomCmdpSpec,
};
