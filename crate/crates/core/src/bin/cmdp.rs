use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cmdp_core::bench::{
    fit_rate_with, gen_gridworld_spec, gen_random_cmdp_spec, run_experiment, ExperimentConfig, FitOptions,
    GridworldSpec, RandomCmdpSpec, RateModel, SolverKind,
};
use cmdp_core::dual::compute_constants;
use cmdp_core::eval::lagrangian_reward;
use cmdp_core::invariants::{run_suite, SUITES};
use cmdp_core::model::{validate_model, CmdpData};
use cmdp_core::oracles::{dual_grid_search, occupancy_lp_solve, soft_value_iteration, DEFAULT_VI_TOL};
use cmdp_core::trace::TraceTable;
use cmdp_core::{CmdpError, DecisionRule, Policy, Result, SaTable, TabularCmdp};

#[derive(Parser)]
#[command(name = "cmdp", version, about = "Entropy-regularized tabular CMDP solvers and oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a CMDP JSON file against every model invariant.
    Validate { file: PathBuf },
    /// Generate an instance.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run a solver from an experiment config.
    Solve {
        solver: SolverArg,
        #[arg(short, long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run an oracle on a CMDP file.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
    },
    /// Run property checks on seeded random instances.
    CheckInvariants {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a convergence rate to a trace column.
    FitRate {
        trace: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value = "power")]
        model: String,
        #[arg(long, default_value_t = 10)]
        min_rows: usize,
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Dual,
    Bisect,
    Standard,
}

#[derive(Args)]
struct OutArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the Slater policy's probability table.
    #[arg(long)]
    slater_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenKind {
    Random {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long, default_value_t = 1)]
        constraints: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0.9)]
        threshold_factor: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    Gridworld {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Hazard cell as x,y (repeatable); default is the cell left of the goal.
        #[arg(long = "hazard", value_parser = parse_cell)]
        hazards: Vec<(usize, usize)>,
        #[arg(long)]
        no_hazards: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand)]
enum OracleKind {
    /// Unregularized optimum via the occupancy LP.
    Lp { file: PathBuf },
    /// Dual grid search (n <= 2).
    Grid {
        file: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
        /// Slater policy probability table (JSON); uniform if omitted.
        #[arg(long)]
        slater: Option<PathBuf>,
    },
    /// Soft value iteration for r + λᵀg.
    Softvi {
        file: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_VI_TOL)]
        tol: f64,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
}

fn parse_cell(s: &str) -> std::result::Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    Ok((x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?))
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("json");
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_outputs(model: &TabularCmdp, slater: &Policy, out: &OutArgs) -> Result<()> {
    model.save(&out.output)?;
    if let Some(p) = &out.slater_out {
        let text = serde_json::to_string_pretty(&slater.probs().to_rows())?;
        std::fs::write(p, text).map_err(|e| CmdpError::Config(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn load_slater(path: Option<&Path>, model: &TabularCmdp) -> Result<Policy> {
    match path {
        None => Ok(Policy::uniform(model.num_states(), model.num_actions())),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CmdpError::Config(format!("{}: {e}", p.display())))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            Policy::from_probs(SaTable::from_rows(&rows)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| CmdpError::Io { path: file.clone(), source: e })?;
            let data: CmdpData = serde_json::from_str(&text).map_err(|e| CmdpError::Parse {
                path: file.clone(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let report = validate_model(&data);
            print_json(&serde_json::json!({ "valid": report.is_pass(), "violations": report.violations }));
            if report.is_pass() {
                Ok(())
            } else {
                Err(CmdpError::InvalidModel(report))
            }
        }
        Command::Gen { kind } => match kind {
            GenKind::Random { seed, states, actions, constraints, gamma, threshold_factor, out } => {
                let spec = RandomCmdpSpec {
                    seed,
                    num_states: states,
                    num_actions: actions,
                    num_constraints: constraints,
                    gamma,
                    threshold_factor,
                };
                let (m, p) = gen_random_cmdp_spec(&spec)?;
                write_outputs(&m, &p, &out)
            }
            GenKind::Gridworld { width, height, gamma, hazards, no_hazards, out } => {
                let mut spec = GridworldSpec::new(width, height, gamma);
                if no_hazards {
                    spec.hazards = Some(vec![]);
                } else if !hazards.is_empty() {
                    spec.hazards = Some(hazards);
                }
                let (m, p) = gen_gridworld_spec(&spec)?;
                write_outputs(&m, &p, &out)
            }
        },
        Command::Solve { solver, config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.solver = Some(match solver {
                SolverArg::Dual => SolverKind::DualDescent,
                SolverArg::Bisect => SolverKind::Bisection,
                SolverArg::Standard => SolverKind::StandardCmdp,
            });
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outcome = run_experiment(&cfg)?;
            print_json(&outcome.summary);
            Ok(())
        }
        Command::Oracle { kind } => match kind {
            OracleKind::Lp { file } => {
                let m = TabularCmdp::load(&file)?;
                let sol = occupancy_lp_solve(&m)?;
                print_json(&json!({
                    "value": sol.value,
                    "policy": sol.policy.probs().to_rows(),
                    "occupancy": sol.occupancy.mu.to_rows(),
                    "flow_residual": sol.occupancy.flow_residual(&m),
                }));
                Ok(())
            }
            OracleKind::Grid { file, tau, resolution, slater } => {
                let m = TabularCmdp::load(&file)?;
                let sl = load_slater(slater.as_deref(), &m)?;
                let c = compute_constants(&m, &sl, tau)?;
                let bx = c.dual_box(tau, m.num_actions(), m.gamma())?;
                let g = dual_grid_search(&m, tau, &bx, resolution)?;
                print_json(&json!({
                    "lambda_star": g.lambda_star,
                    "d_star": g.d_star,
                    "box_upper": bx.upper,
                    "spacing": g.certificate.spacing,
                    "neighbors": g.certificate.neighbors,
                    "evaluations": g.certificate.evaluations,
                    "oracle_error_bound": c.ell * resolution * resolution / 2.0,
                }));
                Ok(())
            }
            OracleKind::Softvi { file, tau, tol, lambda } => {
                let m = TabularCmdp::load(&file)?;
                let lambda = if lambda.is_empty() { vec![0.0; m.num_constraints()] } else { lambda };
                let r = lagrangian_reward(&m, &lambda)?;
                let out = soft_value_iteration(&m, &r, tau, tol)?;
                print_json(&json!({
                    "value_at_rho": out.value.at(m.initial_dist()),
                    "value": out.value.v,
                    "policy": out.policy.probs().to_rows(),
                    "iterations": out.iterations,
                }));
                Ok(())
            }
        },
        Command::CheckInvariants { suite, seed } => {
            let results = run_suite(&suite, seed)?;
            let mut failed = 0;
            for r in &results {
                println!("{r}");
                if !r.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed (suites: {:?})", results.len(), failed, SUITES);
            if failed > 0 {
                Err(CmdpError::Config(format!("{failed} invariant checks failed")))
            } else {
                Ok(())
            }
        }
        Command::FitRate { trace, column, model, min_rows, floor } => {
            let table = TraceTable::load(&trace)?;
            let model: RateModel = model.parse()?;
            let opts = FitOptions { min_rows, floor, ..FitOptions::default() };
            let fit = fit_rate_with(&table, &column, model, &opts)?;
            print_json(&serde_json::to_value(&fit)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
