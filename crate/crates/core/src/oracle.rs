//! Brute-force ground truth for small markets.
//!
//! Minimizes the dual objective by nested grid search over the price box,
//! refining a shrinking grid around the best point level by level.
//! It shares only the objective with the main solver, so agreement between
//! the two is meaningful evidence that both are right.

use serde::Serialize;

use crate::dual::{dual_objective, extract_multipliers, DualPoint, PriceBox};
use crate::error::{FppeError, Result};
use crate::market::{MarketInstance, SolverConfig};
use crate::par::{map_range, Execution};
use crate::solve_dual;

/// Largest number of goods the oracle accepts.
pub const MAX_ORACLE_GOODS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub levels: usize,
    pub points_per_axis: usize,
    /// Each level's box is this many times narrower than the previous one.
    pub shrink: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { levels: 8, points_per_axis: 25, shrink: 4.0, execution: Execution::default() }
    }
}

impl OracleConfig {
    pub fn with_levels(levels: usize) -> Self {
        Self { levels, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(FppeError::InvalidArgument("oracle levels must be at least 1".into()));
        }
        if self.points_per_axis < 2 {
            return Err(FppeError::InvalidArgument("oracle needs at least 2 points per axis".into()));
        }
        if !(self.shrink > 1.0 && self.shrink.is_finite()) {
            return Err(FppeError::InvalidArgument("oracle shrink factor must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    pub point: DualPoint,
    /// Best objective after each level; nonincreasing.
    pub level_best: Vec<f64>,
    pub evaluations: usize,
}

impl OracleSolution {
    pub fn alpha(&self) -> Vec<f64> {
        extract_multipliers(&self.point)
    }
}

/// Minimizes the dual objective one good at a time: for every grid price of
/// the first valued good, the remaining goods are minimized recursively
/// with the same refinement. Partial minimization keeps the objective
/// convex along each axis, so every 1-D refinement brackets its minimizer.
/// A joint grid over all goods does not have that property and can stall
/// on the kinked ridges where a bidder is tied across goods.
pub fn oracle_solve(inst: &MarketInstance, cfg: &OracleConfig) -> Result<OracleSolution> {
    cfg.validate()?;
    let m = inst.num_goods();
    if m > MAX_ORACLE_GOODS {
        return Err(FppeError::OracleTooLarge { goods: m, max: MAX_ORACLE_GOODS });
    }
    let search = Search { inst, cfg, bx: PriceBox::for_instance(inst), axes: inst.valued_goods() };
    let mut prices = vec![0.0; m];
    let (mut level_best, evaluations) = if search.axes.is_empty() {
        (vec![dual_objective(inst, &prices)?; cfg.levels], 1)
    } else {
        let best = search.minimize(0, &prices, cfg.execution);
        prices = best.prices;
        (best.level_best, best.evaluations)
    };
    // the trace is of best-so-far values
    for k in 1..level_best.len() {
        level_best[k] = level_best[k].min(level_best[k - 1]);
    }
    Ok(OracleSolution { point: DualPoint::at(inst, prices)?, level_best, evaluations })
}

struct Search<'a> {
    inst: &'a MarketInstance,
    cfg: &'a OracleConfig,
    bx: PriceBox,
    axes: Vec<usize>,
}

struct AxisBest {
    prices: Vec<f64>,
    value: f64,
    level_best: Vec<f64>,
    evaluations: usize,
}

impl Search<'_> {
    /// Best prices over axes `depth..` with the earlier axes fixed in `base`.
    fn minimize(&self, depth: usize, base: &[f64], exec: Execution) -> AxisBest {
        let j = self.axes[depth];
        let pts = self.cfg.points_per_axis;
        let (mut lo, mut hi) = (self.bx.lower[j], self.bx.upper[j]);
        let mut best = AxisBest { prices: base.to_vec(), value: f64::INFINITY, level_best: Vec::new(), evaluations: 0 };
        for _ in 0..self.cfg.levels {
            let at = |k: usize| {
                if k == pts - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (pts - 1) as f64
                }
            };
            let results = map_range(exec, pts, |k| {
                let mut p = base.to_vec();
                p[j] = at(k);
                if depth + 1 == self.axes.len() {
                    let v = dual_objective(self.inst, &p).unwrap_or(f64::INFINITY);
                    (p, v, 1)
                } else {
                    // inner searches run sequentially; the outer axis already
                    // spreads the work
                    let inner = self.minimize(depth + 1, &p, Execution::Sequential);
                    (inner.prices, inner.value, inner.evaluations)
                }
            });
            // strict improvement keeps the lowest index on exact ties
            for (p, v, evals) in results {
                best.evaluations += evals;
                if v < best.value {
                    best.value = v;
                    best.prices = p;
                }
            }
            best.level_best.push(best.value);
            let half = (hi - lo) / (2.0 * self.cfg.shrink);
            let centre = best.prices[j];
            lo = (centre - half).max(self.bx.lower[j]);
            hi = (centre + half).min(self.bx.upper[j]);
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    /// Sup-norm distance between solver and oracle multipliers.
    pub alpha_gap: f64,
    /// Absolute difference of the two dual objectives.
    pub objective_gap: f64,
    pub solver_converged: bool,
}

pub fn compare_solver_oracle(
    inst: &MarketInstance,
    cfg: &SolverConfig,
    oracle: &OracleConfig,
) -> Result<OracleComparison> {
    if inst.num_goods() > MAX_ORACLE_GOODS {
        return Err(FppeError::OracleTooLarge { goods: inst.num_goods(), max: MAX_ORACLE_GOODS });
    }
    let truth = oracle_solve(inst, oracle)?;
    let sol = solve_dual(inst, cfg)?;
    let alpha_gap = truth
        .alpha()
        .iter()
        .zip(&sol.outcome.alpha)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let objective_gap = (dual_objective(inst, &sol.outcome.prices)? - truth.point.objective).abs();
    Ok(OracleComparison { alpha_gap, objective_gap, solver_converged: sol.converged() })
}
