//! Command-line definitions and dispatch.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, bad
//! config, failed verification), 2 on solver non-convergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taskalloc::moderate::{alternating_solve, policy_objective, AlternatingOptions};
use taskalloc::oracle::{oracle_moderate, oracle_strict, GridSpec, OracleSolution};
use taskalloc::sim::{simulate_system, SimConfig, SystemSimStats, RNG_SCHEME};
use taskalloc::strict::solve_strict;
use taskalloc::worker::{
    moderate_stationary, moderate_utility, stationary_strict_closed_form, strict_utility,
    AssignmentMode, Policy, State, StationaryDistribution, WorkerParams,
};

use crate::config::{load_config, ExperimentConfig};
use crate::figures::{run_reproduction, Figure};
use crate::report::{format_sig, verify_report, SolveReport, SolverOutcome};
use crate::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TASKALLOC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Strict,
    Moderate,
}

impl From<ModeArg> for AssignmentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => AssignmentMode::Strict,
            ModeArg::Moderate => AssignmentMode::Moderate,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "taskalloc",
    version,
    about = "Sampling-rate allocation for exhaustible workers",
    long_about = "Computes optimal sampling-rate (and task-assignment-probability) \
                  allocations for a source feeding tasks to workers that exhaust \
                  themselves, validates solutions against grid-search oracles and \
                  KKT certificates, and cross-checks them by discrete-event \
                  simulation."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the stationary distribution and utility of one worker.
    Steady {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        /// Moderate-state success probability.
        #[arg(long, default_value_t = 1.0)]
        ps: f64,
        /// Sampling rate.
        #[arg(long)]
        alpha: f64,
        /// Moderate-assignment probability (moderate mode only).
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
        mode: ModeArg,
        /// Permit workers whose exhaustion rate exceeds their recovery rate.
        #[arg(long)]
        allow_unstable: bool,
    },
    /// Solve the configured allocation problem and persist the run.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output file (defaults to $TASKALLOC_OUT/solve.json, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search the configured problem with the brute-force oracle.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo validation of a policy (stored or freshly solved).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Solve report whose policy should be simulated; solves afresh
        /// when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a bundled experiment preset and write its artifacts.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        /// Output directory (defaults to $TASKALLOC_OUT, else ".").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a persisted solver run from its JSON alone.
    Verify {
        report: PathBuf,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Steady { lambda, mu, ps, alpha, p, mode, allow_unstable } => {
            steady(lambda, mu, ps, alpha, p, mode.into(), allow_unstable)
        }
        Command::Solve { config, out } => solve(&config, out),
        Command::Oracle { config, out } => oracle(&config, out),
        Command::Simulate { config, policy, out } => simulate(&config, policy, out),
        Command::Reproduce { figure, out } => {
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let files = run_reproduction(figure, &dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Verify { report } => verify(&report),
    }
}

fn steady(
    lambda: f64,
    mu: f64,
    ps: f64,
    alpha: f64,
    p: f64,
    mode: AssignmentMode,
    allow_unstable: bool,
) -> CliResult<()> {
    let worker = if allow_unstable {
        WorkerParams::allow_unstable(lambda, mu, ps)?
    } else {
        WorkerParams::new(lambda, mu, ps)?
    };
    let (pi, utility): (StationaryDistribution, f64) = match mode {
        AssignmentMode::Strict => (
            stationary_strict_closed_form(&worker, alpha)?,
            strict_utility(&worker, alpha),
        ),
        AssignmentMode::Moderate => (
            moderate_stationary(&worker, alpha, p)?,
            moderate_utility(&worker, alpha, p)?,
        ),
    };
    println!("stationary distribution:");
    for state in State::ALL {
        println!("  {:<4} {}", state.name(), format_sig(pi.prob(state), 9));
    }
    println!("utility: {}", format_sig(utility, 9));
    Ok(())
}

/// Writes JSON to `--out`, else `$TASKALLOC_OUT/<name>`, else stdout.
fn emit_json<T: Serialize>(value: &T, out: Option<PathBuf>, default_name: &str) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?;
    let target = out.or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(default_name))
    });
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, json + "\n")?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn solve_to_report(config: &ExperimentConfig) -> CliResult<(SolveReport, bool)> {
    let workers = config.materialize_workers()?;
    match config.mode {
        AssignmentMode::Strict => {
            let solution = solve_strict(&workers, config.budget)?;
            let kkt = taskalloc::oracle::verify_kkt(&solution, &workers, config.budget);
            let report = SolveReport {
                schema_version: 1,
                config: config.clone(),
                policy: Policy {
                    alpha: solution.alpha.clone(),
                    p: vec![0.0; workers.len()],
                },
                utility: solution.utility,
                outcome: SolverOutcome::Strict {
                    water_level: solution.water_level,
                    active_set: solution.active_set,
                    kkt_passed: kkt.passed,
                },
            };
            Ok((report, true))
        }
        AssignmentMode::Moderate => {
            let opts = AlternatingOptions {
                rho: config.solver.rho,
                eps: config.solver.eps,
                max_outer: config.solver.max_outer,
                node_cap: config.solver.node_cap,
                selection: config.solver.selection,
                initial_p: config.solver.initial_p.clone(),
                joint_p_block: false,
            };
            let (policy, utility, outcome) = alternating_solve(&workers, config.budget, &opts)?;
            let converged = outcome.converged;
            let report = SolveReport {
                schema_version: 1,
                config: config.clone(),
                policy,
                utility,
                outcome: SolverOutcome::Moderate {
                    outer_iterations: outcome.outer_iterations,
                    converged: outcome.converged,
                    blocks_converged: outcome.blocks_converged,
                    total_nodes: outcome.total_nodes,
                    initial_p: outcome.initial_p,
                    utility_trace: outcome.utility_trace,
                },
            };
            Ok((report, converged))
        }
    }
}

fn solve(config_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let config = load_config(config_path)?;
    let (report, converged) = solve_to_report(&config)?;
    println!("utility: {}", format_sig(report.utility, 9));
    emit_json(&report, out, "solve.json")?;
    if !converged {
        return Err(CliError::NonConvergence(format!(
            "alternating solve hit max_outer = {}",
            config.solver.max_outer
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRun<'a> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    solution: OracleSolution,
}

fn oracle(config_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let config = load_config(config_path)?;
    let workers = config.materialize_workers()?;
    let grid = GridSpec::new(config.grid.alpha_steps, config.grid.p_steps)?;
    let solution = match config.mode {
        AssignmentMode::Strict => oracle_strict(&workers, config.budget, &grid)?,
        AssignmentMode::Moderate => oracle_moderate(&workers, config.budget, &grid)?,
    };
    println!("utility: {}", format_sig(solution.utility, 9));
    emit_json(&OracleRun { schema_version: 1, config: &config, solution }, out, "oracle.json")
}

#[derive(Serialize)]
struct SimulationRun<'a> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    rng: &'static str,
    policy: Policy,
    /// Convergence flag of the fresh solve that produced the policy, if
    /// one ran.
    solver_converged: Option<bool>,
    analytic_utility: f64,
    stats: SystemSimStats,
}

fn simulate(config_path: &Path, policy: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<()> {
    let config = load_config(config_path)?;
    let workers = config.materialize_workers()?;
    let (policy, solver_converged) = match policy {
        Some(path) => {
            let report = SolveReport::load(&path)?;
            report
                .policy
                .validate(workers.len(), config.budget)
                .map_err(|e| CliError::Validation(format!("stored policy invalid: {e}")))?;
            (report.policy, None)
        }
        None => {
            let (report, converged) = solve_to_report(&config)?;
            (report.policy, Some(converged))
        }
    };
    let analytic_utility = match config.mode {
        AssignmentMode::Strict => workers
            .iter()
            .zip(&policy.alpha)
            .map(|(w, &a)| strict_utility(w, a))
            .sum(),
        AssignmentMode::Moderate => policy_objective(&workers, &policy.alpha, &policy.p)?,
    };
    let sim_config = SimConfig {
        horizon: config.sim.horizon,
        seed: config.sim.seed,
        warmup: config.sim.warmup,
        batches: config.sim.batches,
    };
    let stats = simulate_system(&workers, &policy, config.mode, &sim_config)?;
    println!(
        "simulated success rate: {} (analytic {}, stderr {})",
        format_sig(stats.aggregate.success_rate, 9),
        format_sig(analytic_utility, 9),
        format_sig(stats.aggregate.stderr, 9),
    );
    emit_json(
        &SimulationRun {
            schema_version: 1,
            config: &config,
            rng: RNG_SCHEME,
            policy,
            solver_converged,
            analytic_utility,
            stats,
        },
        out,
        "simulate.json",
    )
}

fn verify(report_path: &Path) -> CliResult<()> {
    let report = SolveReport::load(report_path)?;
    let verification = verify_report(&report)?;
    if let Some(kkt) = &verification.kkt {
        for check in &kkt.checks {
            println!(
                "check {:<24} {} (residual {}, tolerance {})",
                check.name,
                if check.passed { "pass" } else { "FAIL" },
                format_sig(check.residual, 9),
                format_sig(check.tolerance, 9),
            );
        }
    }
    println!(
        "utility drift: {} (tolerance 1e-9)",
        format_sig(verification.utility_drift, 9)
    );
    if verification.passed {
        println!("verification PASSED");
        Ok(())
    } else {
        Err(CliError::Validation("verification FAILED".into()))
    }
}
