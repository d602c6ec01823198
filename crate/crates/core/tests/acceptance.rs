//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{fixture, sup_gap};
use fppe::oracle::{oracle_solve, OracleConfig};
use fppe::par::Execution;
use fppe::statics::{run_monotonicity_suite, run_sensitivity_suite, run_shill_suite, InstanceSource, SuiteReport};
use fppe::strategic::{median_max_regret_by_n, misreport_grid, run_regret_grid, standard_lambdas, RegretGrid};
use fppe::{solve_dual, MarketInstance, Solution, SolverConfig};

const SEED: u64 = 0;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn timed_solve(inst: &MarketInstance) -> (Solution, Duration) {
    let start = Instant::now();
    let sol = solve_dual(inst, &SolverConfig::default()).unwrap();
    (sol, start.elapsed())
}

/// One CSV row per solve: enough to detect any change in the outcome.
fn solutions_csv(runs: &[(String, Solution)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "status", "iterations", "residual", "alpha", "prices", "revenue", "social_welfare"])
        .unwrap();
    for (name, sol) in runs {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            name.clone(),
            format!("{:?}", sol.status),
            sol.iterations.to_string(),
            sol.residual.to_string(),
            join(&sol.outcome.alpha),
            join(&sol.outcome.prices),
            sol.report.revenue.to_string(),
            sol.report.social_welfare.to_string(),
        ])
        .unwrap();
    }
    w.into_inner().unwrap()
}

const EXAMPLES: [&str; 6] = [
    "rev_value_A.json",
    "rev_value_B.json",
    "sw_bidder_single.json",
    "sw_bidder_pair.json",
    "sw_value_base.json",
    "sw_value_modified.json",
];

fn worked_example_runs() -> (Vec<(String, Solution)>, Duration) {
    let mut slowest = Duration::ZERO;
    let runs = EXAMPLES
        .iter()
        .map(|name| {
            let (sol, t) = timed_solve(&fixture(name));
            slowest = slowest.max(t);
            (name.to_string(), sol)
        })
        .collect();
    (runs, slowest)
}

fn criterion_1() -> Verdict {
    let (runs, slowest) = worked_example_runs();
    let sol = |k: usize| &runs[k].1;
    let a = sol(0);
    let b = sol(1);
    let single = sol(2);
    let pair = sol(3);
    let base = sol(4);
    let modified = sol(5);
    let checks = [
        ("all converged", runs.iter().all(|(_, s)| s.converged())),
        ("A alpha", sup_gap(&a.outcome.alpha, &[1.0, 1.0]) <= 1e-3),
        ("A revenue", within(a.report.revenue, 15.0, 1e-4)),
        ("B alpha", sup_gap(&b.outcome.alpha, &[0.5, 1.0]) <= 1e-3),
        ("B revenue", within(b.report.revenue, 10.0, 1e-4)),
        ("single alpha", within(single.outcome.alpha[0], 0.1, 1e-3)),
        ("pair alpha", sup_gap(&pair.outcome.alpha, &[0.2, 1.0]) <= 1e-3),
        (
            "pair allocation",
            sup_gap(&[pair.outcome.allocation[(0, 0)], pair.outcome.allocation[(1, 0)]], &[0.5, 0.5]) <= 1e-3,
        ),
        ("base alpha", sup_gap(&base.outcome.alpha, &[0.1, 1.0]) <= 1e-3),
        (
            "modified allocation",
            sup_gap(&[modified.outcome.allocation[(0, 0)], modified.outcome.allocation[(1, 0)]], &[0.25, 0.75])
                <= 1e-3,
        ),
        ("runtime", slowest < Duration::from_secs(1)),
    ];
    let failed: Vec<_> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        failed.is_empty(),
        format!(
            "revenues {} / {}; slowest solve {:.1} ms; failed checks: {failed:?}",
            a.report.revenue,
            b.report.revenue,
            slowest.as_secs_f64() * 1e3
        ),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let source = InstanceSource::CompleteGraph { bidders: 1..=4, goods: 1..=2, seed: SEED, budget_scale: 0.5 };
    let oracle = OracleConfig::default();
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for k in 0..60 {
        let (inst, _) = source.draw(k).unwrap();
        let sol = solve_dual(&inst, &SolverConfig::default()).unwrap();
        if !sol.converged() {
            unconverged += 1;
        }
        let truth = oracle_solve(&inst, &oracle).unwrap();
        worst = worst.max(sup_gap(&sol.outcome.alpha, &truth.alpha()));
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-3 && unconverged == 0 && elapsed < Duration::from_secs(120),
        format!("60 instances, worst alpha gap {worst:.3e}, {unconverged} unconverged, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn certification_runs() -> Vec<(String, Solution)> {
    let source = InstanceSource::standard(SEED);
    (0..200)
        .map(|k| {
            let (inst, _) = source.draw(k).unwrap();
            (format!("standard-{k}"), solve_dual(&inst, &SolverConfig::default()).unwrap())
        })
        .collect()
}

fn criterion_3(runs: &[(String, Solution)]) -> Verdict {
    let converged: Vec<_> = runs.iter().filter(|(_, s)| s.converged()).collect();
    let worst = converged.iter().map(|(_, s)| s.report.max_residual()).fold(0.0, f64::max);
    let rate = converged.len() as f64 / runs.len() as f64;
    verdict(
        worst <= 1e-6 && rate >= 0.95,
        format!("convergence {}/{}, worst residual {worst:.3e}", converged.len(), runs.len()),
    )
}

fn suite_verdict(report: &SuiteReport, what: &str) -> Verdict {
    verdict(
        report.failures() == 0,
        format!(
            "{what}: {} records from {} pairs, {} skipped, {} violations",
            report.records.len(),
            report.pairs,
            report.skipped,
            report.failures()
        ),
    )
}

fn criterion_4() -> Verdict {
    let r = run_monotonicity_suite(&InstanceSource::standard(SEED), 200, &SolverConfig::default(), Execution::Parallel)
        .unwrap();
    suite_verdict(&r, "monotonicity")
}

fn criterion_5() -> Verdict {
    let r = run_sensitivity_suite(
        &InstanceSource::standard(SEED),
        200,
        &[0.1, 0.5, 1.0],
        &SolverConfig::default(),
        Execution::Parallel,
    )
    .unwrap();
    suite_verdict(&r, "sensitivity")
}

fn criterion_6() -> Verdict {
    let r = run_shill_suite(&InstanceSource::standard(SEED), 50, &SolverConfig::default(), Execution::Parallel).unwrap();
    suite_verdict(&r, "shill")
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let grid = RegretGrid::standard(SEED);
    let cfg = SolverConfig::default();
    let report = run_regret_grid(&grid, &cfg, Execution::Parallel).unwrap();
    let medians = median_max_regret_by_n(&report.rows, 10);
    let trend = medians.windows(2).all(|w| w[1].1 <= w[0].1);

    // truthful cell on every m = 10 instance, for every bidder
    let lambdas = standard_lambdas();
    let mut worst_truthful = 0.0f64;
    let mut missing = 0;
    for &n in &grid.bidders {
        for s in 0..grid.seeds {
            let inst = fppe::market::generate_complete_graph(n, 10, grid.instance_seed(n, 10, s), grid.budget_scale)
                .unwrap();
            for i in 0..n {
                let mr = misreport_grid(&inst, i, &lambdas, &cfg, Execution::Parallel).unwrap();
                match mr.cells.iter().find(|c| c.lambda_v == 1.0 && c.lambda_b == 1.0) {
                    Some(c) if c.converged => worst_truthful = worst_truthful.max(c.gain.abs()),
                    _ => missing += 1,
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let shown: Vec<String> = medians.iter().map(|(n, v)| format!("n={n}: {v:.4}")).collect();
    verdict(
        trend && worst_truthful <= 1e-6 && missing == 0 && elapsed < Duration::from_secs(600),
        format!(
            "median regret at m=10 [{}] {}; worst truthful gain {worst_truthful:.1e} ({missing} missing); {} skipped; {:.1} s",
            shown.join(", "),
            if trend { "nonincreasing" } else { "NOT nonincreasing" },
            report.skipped,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8(first_examples: &[u8], first_cert: &[u8]) -> Verdict {
    let examples = solutions_csv(&worked_example_runs().0);
    let cert = solutions_csv(&certification_runs());
    verdict(
        examples == first_examples && cert == first_cert,
        format!("{} + {} bytes compared", examples.len(), cert.len()),
    )
}

fn main() -> ExitCode {
    let examples_csv = solutions_csv(&worked_example_runs().0);
    let cert_runs = certification_runs();
    let cert_csv = solutions_csv(&cert_runs);

    let criteria: Vec<Criterion> = vec![
        ("1 worked examples", Box::new(criterion_1)),
        ("2 oracle equivalence", Box::new(criterion_2)),
        ("3 equilibrium certification", Box::new(|| criterion_3(&cert_runs))),
        ("4 monotonicity", Box::new(criterion_4)),
        ("5 sensitivity", Box::new(criterion_5)),
        ("6 shill-proofness", Box::new(criterion_6)),
        ("7 strategic trends", Box::new(criterion_7)),
        ("8 determinism", Box::new(|| criterion_8(&examples_csv, &cert_csv))),
    ];
    let mut failures = 0;
    for (name, run) in &criteria {
        let v = run();
        if !v.pass {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
