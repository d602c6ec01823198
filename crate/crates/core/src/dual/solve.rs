use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checks::{certify, EquilibriumReport};
use crate::error::{FppeError, Result};
use crate::market::{validate_instance, MarketInstance, Matrix, PacingOutcome, SolverConfig, StepRule};
use crate::recovery::{build_tie_graph, recover_allocation, recover_allocation_with_tol};

use super::polish::polish_candidates;
use super::smooth::Smoothed;
use super::{bidder_rates, dual_objective, dual_subgradient, recompute_prices, DualPoint, PriceBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

/// Result of [`solve_dual`]. When the status is `NotConverged` the fields
/// hold the best iterate found and its residual.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub dual: DualPoint,
    pub outcome: PacingOutcome,
    pub report: EquilibriumReport,
    pub iterations: usize,
    /// Largest equilibrium residual of `outcome`.
    pub residual: f64,
    pub method: String,
    /// Best dual objective seen, recorded at every refinement point.
    pub objective_trace: Vec<f64>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

struct Candidate {
    outcome: PacingOutcome,
    report: EquilibriumReport,
    residual: f64,
    objective: f64,
}

fn evaluate(inst: &MarketInstance, alpha: Vec<f64>, cfg: &SolverConfig) -> Option<Candidate> {
    let prices = recompute_prices(inst, &alpha);
    let tg = build_tie_graph(inst, &alpha, &prices, cfg.tie_epsilon).ok()?;
    let x = recover_allocation(&tg).ok()?;
    let outcome = PacingOutcome::new(inst, alpha, x, prices);
    let report = certify(inst, &outcome, cfg.tol_kkt);
    let residual = report.max_residual();
    let objective = dual_objective(inst, &outcome.prices).unwrap_or(f64::INFINITY);
    Some(Candidate { outcome, report, residual, objective })
}

/// Outcome of the raw rates at `prices`, used only when no refined
/// candidate could be allocated at all.
fn best_effort(inst: &MarketInstance, prices: &[f64], cfg: &SolverConfig) -> Candidate {
    let alpha: Vec<f64> = bidder_rates(inst, prices)
        .map(|r| r.into_iter().map(|r| r.rate.clamp(0.0, 1.0)).collect())
        .unwrap_or_else(|_| vec![1.0; inst.num_bidders()]);
    let prices = recompute_prices(inst, &alpha);
    let x = build_tie_graph(inst, &alpha, &prices, cfg.tie_epsilon)
        .and_then(|tg| recover_allocation_with_tol(&tg, f64::INFINITY))
        .unwrap_or_else(|_| Matrix::zeros(inst.num_bidders(), inst.num_goods()));
    let outcome = PacingOutcome::new(inst, alpha, x, prices);
    let report = certify(inst, &outcome, cfg.tol_kkt);
    let residual = report.max_residual();
    let objective = dual_objective(inst, &outcome.prices).unwrap_or(f64::INFINITY);
    Candidate { outcome, report, residual, objective }
}

fn method_name(rule: StepRule) -> String {
    let rule = match rule {
        StepRule::Fixed => "fixed",
        StepRule::Diminishing => "diminishing",
        StepRule::Adaptive => "adaptive",
    };
    format!("projected-subgradient[{rule}]+smoothed-newton+tie-group-polish")
}

/// Smoothing levels for the second phase, coarsest first.
const SMOOTHING: [f64; 10] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10];

/// Subgradient iterations before handing over to the smoothed phase.
fn subgradient_budget(cfg: &SolverConfig) -> usize {
    cfg.max_iters.min(20 * cfg.check_interval)
}

/// Minimizes the price-space dual in two phases. Projected subgradient
/// descent inside [`PriceBox`] runs first; if it has not certified an
/// equilibrium after a bounded number of iterations, damped Newton on an
/// entropic smoothing continues from its best point with shrinking
/// smoothing. Both phases periodically refine their current point into an
/// exact candidate, and the first candidate whose largest residual is at
/// most `cfg.tol_kkt` is returned as converged. Each Newton step counts as
/// one iteration.
pub fn solve_dual(inst: &MarketInstance, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(FppeError::InvalidInstance(violations));
    }
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    let method = method_name(cfg.step_rule);
    let valued = inst.valued_goods();
    if valued.is_empty() {
        let prices = vec![0.0; m];
        let outcome = PacingOutcome::new(inst, vec![1.0; n], Matrix::zeros(n, m), prices.clone());
        let report = certify(inst, &outcome, cfg.tol_kkt);
        let residual = report.max_residual();
        return Ok(Solution {
            status: SolveStatus::Converged,
            dual: DualPoint::at(inst, prices)?,
            outcome,
            report,
            iterations: 0,
            residual,
            method,
            objective_trace: Vec::new(),
        });
    }

    let bx = PriceBox::for_instance(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut p: Vec<f64> = (0..m)
        .map(|j| {
            let (lo, hi) = (bx.lower[j], bx.upper[j]);
            if hi > 0.0 {
                lo + (hi - lo) * rng.gen_range(0.5..=1.0)
            } else {
                0.0
            }
        })
        .collect();

    let scale = bx.upper.iter().copied().fold(0.0, f64::max);
    let base_step = 0.1 * scale;
    let min_step = 1e-15 * scale;
    let patience = 5 + 2 * valued.len();

    let mut step = base_step;
    let mut best_p = p.clone();
    let mut best_obj = dual_objective(inst, &p)?;
    let mut since_improved = 0usize;
    let mut fallback: Option<Candidate> = None;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let phase_one = subgradient_budget(cfg);

    while iterations < phase_one {
        iterations += 1;
        let obj = dual_objective(inst, &p)?;
        if obj < best_obj {
            best_obj = obj;
            best_p.copy_from_slice(&p);
            since_improved = 0;
        } else {
            since_improved += 1;
        }
        if cfg.step_rule == StepRule::Adaptive && since_improved >= patience {
            step *= 0.5;
            p.copy_from_slice(&best_p);
            since_improved = 0;
            if step < min_step {
                // restart the schedule; the polish below gets another look
                step = base_step * 1e-3;
            }
        }

        let g = dual_subgradient(inst, &p)?;
        // drop components that would only push against the box
        let dir: Vec<f64> = (0..m)
            .map(|j| {
                let at_lo = p[j] <= bx.lower[j] && g[j] > 0.0;
                let at_hi = p[j] >= bx.upper[j] && g[j] < 0.0;
                if bx.upper[j] <= 0.0 || at_lo || at_hi {
                    0.0
                } else {
                    g[j]
                }
            })
            .collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let stationary = norm == 0.0;

        if stationary || iterations % cfg.check_interval == 0 || iterations == phase_one {
            match refine(inst, cfg, &best_p, &mut fallback) {
                Refined::Certified(found) => {
                    trace.push(best_obj.min(found.objective));
                    return finish(inst, *found, iterations, SolveStatus::Converged, method, trace);
                }
                Refined::Lower(cand_p, v) if v < best_obj && bx.contains(&cand_p) => {
                    best_obj = v;
                    best_p.copy_from_slice(&cand_p);
                    p.copy_from_slice(&cand_p);
                    since_improved = 0;
                }
                Refined::Lower(..) | Refined::Nothing => {}
            }
            trace.push(best_obj);
        }
        if stationary {
            break;
        }

        let eta = match cfg.step_rule {
            StepRule::Fixed => base_step,
            StepRule::Diminishing => base_step / (iterations as f64).sqrt(),
            StepRule::Adaptive => step,
        };
        for j in 0..m {
            p[j] -= eta * dir[j] / norm;
        }
        bx.project(&mut p);
    }

    // smoothed phase over the valued goods, in log prices
    let mut q: Vec<f64> = valued.iter().map(|&j| best_p[j].max(bx.lower[j]).ln()).collect();
    for mu in SMOOTHING {
        if iterations >= cfg.max_iters {
            break;
        }
        let smoothed = Smoothed::new(inst, &valued, mu);
        iterations += smoothed.minimize(&mut q, cfg.max_iters - iterations);
        let mut cand_p = vec![0.0; m];
        for (slot, &j) in valued.iter().enumerate() {
            cand_p[j] = q[slot].exp();
        }
        bx.project(&mut cand_p);
        if let Ok(v) = dual_objective(inst, &cand_p) {
            if v < best_obj {
                best_obj = v;
                best_p.copy_from_slice(&cand_p);
            }
        }
        match refine(inst, cfg, &cand_p, &mut fallback) {
            Refined::Certified(found) => {
                trace.push(best_obj.min(found.objective));
                return finish(inst, *found, iterations, SolveStatus::Converged, method, trace);
            }
            Refined::Lower(lp, v) if v < best_obj && bx.contains(&lp) => {
                best_obj = v;
                best_p = lp;
            }
            Refined::Lower(..) | Refined::Nothing => {}
        }
        trace.push(best_obj);
    }

    let best = match fallback {
        Some(c) => c,
        None => best_effort(inst, &best_p, cfg),
    };
    finish(inst, best, iterations, SolveStatus::NotConverged, method, trace)
}

enum Refined {
    Certified(Box<Candidate>),
    /// Prices of the lowest-objective candidate, with that objective.
    Lower(Vec<f64>, f64),
    Nothing,
}

/// Tries every polish candidate at `prices`. Keeps the least-violating one
/// in `fallback` for the not-converged report.
fn refine(inst: &MarketInstance, cfg: &SolverConfig, prices: &[f64], fallback: &mut Option<Candidate>) -> Refined {
    let mut lowest: Option<(Vec<f64>, f64)> = None;
    for alpha in polish_candidates(inst, prices) {
        let Some(c) = evaluate(inst, alpha, cfg) else {
            continue;
        };
        if c.residual <= cfg.tol_kkt {
            return Refined::Certified(Box::new(c));
        }
        let v = c.objective;
        if v.is_finite() && lowest.as_ref().is_none_or(|(_, best)| v < *best) {
            lowest = Some((c.outcome.prices.clone(), v));
        }
        if fallback.as_ref().is_none_or(|f| c.residual < f.residual) {
            *fallback = Some(c);
        }
    }
    match lowest {
        Some((p, v)) => Refined::Lower(p, v),
        None => Refined::Nothing,
    }
}

fn finish(
    inst: &MarketInstance,
    c: Candidate,
    iterations: usize,
    status: SolveStatus,
    method: String,
    objective_trace: Vec<f64>,
) -> Result<Solution> {
    let dual = DualPoint::at(inst, c.outcome.prices.clone())?;
    Ok(Solution {
        status,
        dual,
        outcome: c.outcome,
        report: c.report,
        iterations,
        residual: c.residual,
        method,
        objective_trace,
    })
}
