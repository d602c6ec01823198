//! `fppe` command-line front end.
//!
//! Exit status encodes the scientific outcome: 0 on success, 1 when a solve
//! does not converge or a guaranteed relation fails, 2 on bad input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fppe::market::{generate_complete_graph, load_instance, save_instance};
use fppe::oracle::{compare_solver_oracle, OracleComparison, OracleConfig};
use fppe::par::{with_jobs, Execution};
use fppe::statics::{
    run_monotonicity_suite, run_sensitivity_suite, run_shill_suite, write_statics_csv, InstanceSource, SuiteReport,
};
use fppe::strategic::{
    misreport_grid, run_regret_grid, standard_lambdas, write_misreport_csv, write_regret_csv, RegretGrid, REGRET_CAP,
    U_FLOOR,
};
use fppe::{solve_dual, EquilibriumReport, PacingOutcome, SolverConfig, StepRule};

#[derive(Parser)]
#[command(name = "fppe", version, about = "First-price pacing equilibrium solver and experiments")]
struct Cli {
    /// Cap on worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the outcome with its equilibrium report.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Write a random complete-graph instance.
    Generate {
        #[arg(long)]
        bidders: usize,
        #[arg(long)]
        goods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        budget_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a comparative-statics suite and write one CSV row per record.
    Statics {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Budget changes for the sensitivity suite.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        budget_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Ex-post regrets over a grid of complete-graph instances.
    Regret {
        #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 6, 8])]
        bidders: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 6, 8, 10, 12, 14])]
        goods: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        replicates: usize,
        #[arg(long, default_value_t = 0.5)]
        budget_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Re-solve with one bidder's values and budget scaled over a grid.
    Misreport {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        bidder: usize,
        /// Scale factors for both values and budget; defaults to 0.1..=1.1.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compare the solver against the brute-force oracle (at most 3 goods).
    OracleCheck {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest accepted sup-norm gap between the two multiplier vectors.
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Suite {
    Monotonicity,
    Sensitivity,
    Shill,
}

#[derive(Args)]
struct SolverArgs {
    /// Solver start point and suite instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest accepted equilibrium residual.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    #[arg(long, default_value = "adaptive")]
    step_rule: StepRule,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            max_iters: self.max_iters,
            step_rule: self.step_rule,
            tol_kkt: self.tol,
            seed: self.seed,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scientific outcome of a command.
enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match with_jobs(jobs, move || run(cli.command)) {
        Ok(Ok(Outcome::Ok)) => ExitCode::SUCCESS,
        Ok(Ok(Outcome::Failed)) => ExitCode::from(1),
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    status: fppe::SolveStatus,
    method: &'a str,
    iterations: usize,
    residual: f64,
    config: &'a SolverConfig,
    outcome: &'a PacingOutcome,
    report: &'a EquilibriumReport,
    objective: f64,
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Solve { instance, out, solver } => {
            let cfg = solver.config()?;
            let inst = load_instance(&instance).with_context(|| format!("loading {}", instance.display()))?;
            let sol = solve_dual(&inst, &cfg)?;
            write_json(
                &SolveDocument {
                    status: sol.status,
                    method: &sol.method,
                    iterations: sol.iterations,
                    residual: sol.residual,
                    config: &cfg,
                    outcome: &sol.outcome,
                    report: &sol.report,
                    objective: sol.dual.objective,
                },
                out.as_deref(),
            )?;
            eprintln!(
                "{}: {} iterations, residual {:e}, revenue {}",
                if sol.converged() { "converged" } else { "not converged" },
                sol.iterations,
                sol.residual,
                sol.report.revenue
            );
            Ok(if sol.converged() { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Generate { bidders, goods, seed, budget_scale, out } => {
            let inst = generate_complete_graph(bidders, goods, seed, budget_scale)?;
            save_instance(&inst, &out)?;
            let vals = inst.values().as_slice();
            let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            eprintln!(
                "{bidders} bidders x {goods} goods: values in [{lo}, {hi}], total budget {}",
                inst.total_budget()
            );
            Ok(Outcome::Ok)
        }
        Command::Statics { suite, count, deltas, budget_scale, out, solver } => {
            let cfg = solver.config()?;
            let source = InstanceSource::CompleteGraph {
                bidders: 2..=8,
                goods: 4..=14,
                seed: solver.seed,
                budget_scale,
            };
            let exec = Execution::Parallel;
            let report: SuiteReport = match suite {
                Suite::Monotonicity => run_monotonicity_suite(&source, count, &cfg, exec)?,
                Suite::Sensitivity => run_sensitivity_suite(&source, count, &deltas, &cfg, exec)?,
                Suite::Shill => run_shill_suite(&source, count, &cfg, exec)?,
            };
            let mut w = sink(out.as_deref())?;
            write_statics_csv(&report.records, &mut w)?;
            w.flush()?;
            let failures = report.failures();
            eprintln!(
                "{} records from {} pairs, {} skipped (not converged), {} failures",
                report.records.len(),
                report.pairs,
                report.skipped,
                failures
            );
            Ok(if failures == 0 { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Regret { bidders, goods, replicates, budget_scale, out, solver } => {
            let cfg = solver.config()?;
            if bidders.is_empty() || goods.is_empty() {
                bail!("need at least one bidder count and one goods count");
            }
            let grid = RegretGrid { bidders, goods, seeds: replicates, base_seed: solver.seed, budget_scale };
            let report = run_regret_grid(&grid, &cfg, Execution::Parallel)?;
            let mut w = sink(out.as_deref())?;
            write_regret_csv(&report.rows, &mut w)?;
            w.flush()?;
            eprintln!(
                "{} rows, {} instances skipped (not converged); regrets use utility floor {U_FLOOR:e} and cap {REGRET_CAP}",
                report.rows.len(),
                report.skipped
            );
            Ok(Outcome::Ok)
        }
        Command::Misreport { instance, bidder, lambdas, out, solver } => {
            let cfg = solver.config()?;
            let inst = load_instance(&instance).with_context(|| format!("loading {}", instance.display()))?;
            let lambdas = lambdas.unwrap_or_else(standard_lambdas);
            let report = misreport_grid(&inst, bidder, &lambdas, &cfg, Execution::Parallel)?;
            let mut w = sink(out.as_deref())?;
            write_misreport_csv(&report, &mut w)?;
            w.flush()?;
            match report.best() {
                Some(b) => eprintln!(
                    "truthful utility {}; best gain {} at (lambda_v, lambda_b) = ({}, {}); {} cells skipped",
                    report.truthful_utility, b.gain, b.lambda_v, b.lambda_b, report.skipped
                ),
                None => eprintln!("no converged cells"),
            }
            Ok(Outcome::Ok)
        }
        Command::OracleCheck { instance, out, threshold, levels, points, solver } => {
            let cfg = solver.config()?;
            let inst = load_instance(&instance).with_context(|| format!("loading {}", instance.display()))?;
            let oracle = OracleConfig { levels, points_per_axis: points, ..OracleConfig::default() };
            let cmp: OracleComparison = compare_solver_oracle(&inst, &cfg, &oracle)?;
            #[derive(Serialize)]
            struct Doc {
                #[serde(flatten)]
                comparison: OracleComparison,
                threshold: f64,
                pass: bool,
            }
            let pass = cmp.alpha_gap <= threshold && cmp.solver_converged;
            write_json(&Doc { comparison: cmp, threshold, pass }, out.as_deref())?;
            eprintln!("alpha gap {:e}, objective gap {:e}", cmp.alpha_gap, cmp.objective_gap);
            Ok(if pass { Outcome::Ok } else { Outcome::Failed })
        }
    }
}
