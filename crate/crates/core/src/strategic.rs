//! Ex-post deviations against a fixed equilibrium.
//!
//! One bidder deviates while everyone else keeps their equilibrium
//! multipliers. The best deviation is measured two ways: with free
//! per-good bids, which reduce to buying at the competitors' highest paced
//! bid, and with a single alternative pacing multiplier. The misreport grid
//! instead re-solves the market with a scaled report.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FppeError, Result};
use crate::knapsack::fractional_knapsack;
use crate::market::{generate_complete_graph, MarketInstance, Matrix, PacingOutcome, SolverConfig};
use crate::par::{map_range, Execution};
use crate::solve_dual;

/// Equilibrium utilities below this are treated as this when dividing.
pub const U_FLOOR: f64 = 1e-9;
/// Relative regrets are capped here and flagged.
pub const REGRET_CAP: f64 = 10.0;
/// Offset around each multiplier breakpoint in the sweep.
pub const EPS_BR: f64 = 1e-9;
/// Uniform grid size of the multiplier sweep.
pub const SWEEP_GRID: usize = 1000;
/// Smallest multiplier tried.
pub const ALPHA_FLOOR: f64 = 1e-6;

fn check_bidder(outcome: &PacingOutcome, i: usize) -> Result<()> {
    if i >= outcome.num_bidders() {
        return Err(FppeError::InvalidArgument(format!(
            "bidder {i} out of range for {} bidders",
            outcome.num_bidders()
        )));
    }
    Ok(())
}

/// `r_j = max_{k != i} alpha_k v_kj`, the price bidder `i` faces when it
/// just matches the best competing bid.
pub fn reserve_prices(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> Vec<f64> {
    (0..inst.num_goods())
        .map(|j| {
            (0..inst.num_bidders())
                .filter(|&k| k != i)
                .map(|k| outcome.alpha[k] * inst.value(k, j))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Best utility from arbitrary per-good bids: a fractional knapsack at the
/// reserve prices, ties won by the deviator.
pub fn best_response_bids(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> f64 {
    let r = reserve_prices(inst, outcome, i);
    fractional_knapsack(inst.values().row(i), &r, inst.budget(i)).utility
}

/// Utility of bidding with multiplier `a`, or `None` when the bidder cannot
/// afford everything that multiplier wins.
fn multiplier_utility(values: &[f64], reserves: &[f64], budget: f64, a: f64) -> Option<f64> {
    let (mut spend, mut utility) = (0.0, 0.0);
    for (&v, &r) in values.iter().zip(reserves) {
        let bid = a * v;
        if bid > r {
            spend += bid;
            utility += v - bid;
        }
    }
    (spend <= budget).then_some(utility)
}

/// Best single multiplier against the reserves: `(multiplier, utility)`.
///
/// Candidates are each breakpoint `r_j / v_ij` offset by `EPS_BR` either
/// side, a uniform grid of `SWEEP_GRID` points, `ALPHA_FLOOR` and 1, all
/// restricted to `[ALPHA_FLOOR, 1]`. A candidate that would overspend is
/// infeasible. The smallest maximizer wins; with no feasible candidate the
/// result is `(0, 0)`.
pub fn best_response_multiplier(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> (f64, f64) {
    let r = reserve_prices(inst, outcome, i);
    let values = inst.values().row(i);
    let mut cands: Vec<f64> = vec![ALPHA_FLOOR, 1.0];
    cands.extend((1..=SWEEP_GRID).map(|k| k as f64 / SWEEP_GRID as f64));
    for (&v, &rj) in values.iter().zip(&r) {
        if v > 0.0 {
            let b = rj / v;
            cands.extend([b - EPS_BR, b + EPS_BR]);
        }
    }
    cands.retain(|a| (ALPHA_FLOOR..=1.0).contains(a));
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best = (0.0, 0.0);
    for a in cands {
        if let Some(u) = multiplier_utility(values, &r, inst.budget(i), a) {
            if u > best.1 {
                best = (a, u);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regret {
    pub value: f64,
    /// Set when the ratio hit `REGRET_CAP`.
    pub capped: bool,
}

/// `(br - eq) / max(eq, U_FLOOR)`, capped at `REGRET_CAP`.
pub fn relative_regret(eq_utility: f64, br_utility: f64) -> Regret {
    let raw = (br_utility - eq_utility) / eq_utility.max(U_FLOOR);
    if raw > REGRET_CAP {
        Regret { value: REGRET_CAP, capped: true }
    } else {
        Regret { value: raw, capped: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRecord {
    pub bidder: usize,
    pub eq_utility: f64,
    pub br_utility_bids: f64,
    /// Best of the sweep and the equilibrium multiplier itself.
    pub br_utility_multiplier: f64,
    pub br_multiplier: f64,
    pub relative_regret_bids: f64,
    pub relative_regret_multiplier: f64,
    pub capped_bids: bool,
    pub capped_multiplier: bool,
}

pub fn regret_record(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> Result<RegretRecord> {
    check_bidder(outcome, i)?;
    let eq = outcome.utility[i];
    let bids = best_response_bids(inst, outcome, i);
    let (swept, swept_u) = best_response_multiplier(inst, outcome, i);
    // keeping the equilibrium multiplier is always an option
    let (br_multiplier, br_u) = if swept_u > eq { (swept, swept_u) } else { (outcome.alpha[i], eq) };
    let rb = relative_regret(eq, bids);
    let rm = relative_regret(eq, br_u);
    Ok(RegretRecord {
        bidder: i,
        eq_utility: eq,
        br_utility_bids: bids,
        br_utility_multiplier: br_u,
        br_multiplier,
        relative_regret_bids: rb.value,
        relative_regret_multiplier: rm.value,
        capped_bids: rb.capped,
        capped_multiplier: rm.capped,
    })
}

/// Complete-graph instances for every `(n, m)` pair, `seeds` of each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretGrid {
    pub bidders: Vec<usize>,
    pub goods: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub budget_scale: f64,
}

impl RegretGrid {
    /// n in {2, 4, 6, 8}, m in {4, 6, ..., 14}, five instances each.
    pub fn standard(base_seed: u64) -> Self {
        Self {
            bidders: vec![2, 4, 6, 8],
            goods: vec![4, 6, 8, 10, 12, 14],
            seeds: 5,
            base_seed,
            budget_scale: 0.5,
        }
    }

    /// Instance cells `(n, m, replicate)` in output order.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &n in &self.bidders {
            for &m in &self.goods {
                for s in 0..self.seeds {
                    out.push((n, m, s));
                }
            }
        }
        out
    }

    /// Generator seed of one cell, drawn from a stream keyed by the cell.
    pub fn instance_seed(&self, n: usize, m: usize, replicate: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(((n as u64) << 40) | ((m as u64) << 20) | replicate as u64);
        rng.next_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub n: usize,
    pub m: usize,
    pub replicate: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub record: RegretRecord,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RegretReport {
    pub rows: Vec<RegretRow>,
    /// Instances dropped because the solve did not converge.
    pub skipped: usize,
}

pub fn run_regret_grid(grid: &RegretGrid, cfg: &SolverConfig, exec: Execution) -> Result<RegretReport> {
    let cells = grid.cells();
    let parts = map_range(exec, cells.len(), |c| -> Result<Option<Vec<RegretRow>>> {
        let (n, m, replicate) = cells[c];
        let seed = grid.instance_seed(n, m, replicate);
        let inst = generate_complete_graph(n, m, seed, grid.budget_scale)?;
        let sol = solve_dual(&inst, cfg)?;
        if !sol.converged() {
            return Ok(None);
        }
        (0..n)
            .map(|i| Ok(RegretRow { n, m, replicate, seed, record: regret_record(&inst, &sol.outcome, i)? }))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    });
    let mut report = RegretReport::default();
    for part in parts {
        match part? {
            Some(rows) => report.rows.extend(rows),
            None => report.skipped += 1,
        }
    }
    Ok(report)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// For each `n` (ascending) at goods count `m`: the median over replicates
/// of the largest per-bidder multiplier regret in the instance.
pub fn median_max_regret_by_n(rows: &[RegretRow], m: usize) -> Vec<(usize, f64)> {
    use std::collections::BTreeMap;
    let mut per_instance: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.m == m) {
        let e = per_instance.entry((r.n, r.replicate)).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.record.relative_regret_multiplier);
    }
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ((n, _), v) in per_instance {
        by_n.entry(n).or_default().push(v);
    }
    by_n.into_iter().map(|(n, v)| (n, median(v))).collect()
}

pub const REGRET_CSV_HEADER: [&str; 13] = [
    "n",
    "m",
    "replicate",
    "seed",
    "bidder",
    "eq_utility",
    "br_utility_bids",
    "br_utility_multiplier",
    "br_multiplier",
    "relative_regret_bids",
    "relative_regret_multiplier",
    "capped_bids",
    "capped_multiplier",
];

pub fn write_regret_csv<W: Write>(rows: &[RegretRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REGRET_CSV_HEADER)?;
    for row in rows {
        let r = &row.record;
        w.write_record([
            row.n.to_string(),
            row.m.to_string(),
            row.replicate.to_string(),
            row.seed.to_string(),
            r.bidder.to_string(),
            r.eq_utility.to_string(),
            r.br_utility_bids.to_string(),
            r.br_utility_multiplier.to_string(),
            r.br_multiplier.to_string(),
            r.relative_regret_bids.to_string(),
            r.relative_regret_multiplier.to_string(),
            r.capped_bids.to_string(),
            r.capped_multiplier.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `0.1, 0.2, ..., 1.1`.
pub fn standard_lambdas() -> Vec<f64> {
    (1..=11).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisreportCell {
    pub lambda_v: f64,
    pub lambda_b: f64,
    pub converged: bool,
    /// True utility of the misreporting bidder; NaN when not converged.
    pub utility: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisreportReport {
    pub bidder: usize,
    pub truthful_utility: f64,
    /// Row-major over `(lambda_v, lambda_b)`.
    pub cells: Vec<MisreportCell>,
    pub skipped: usize,
}

impl MisreportReport {
    /// The converged cell with the largest gain, first in grid order on ties.
    pub fn best(&self) -> Option<&MisreportCell> {
        self.cells
            .iter()
            .filter(|c| c.converged)
            .fold(None, |acc: Option<&MisreportCell>, c| match acc {
                Some(b) if b.gain >= c.gain => Some(b),
                _ => Some(c),
            })
    }
}

/// Bidder `i` reports values scaled by `lambda_v` and budget scaled by
/// `lambda_b`.
pub fn misreport_instance(inst: &MarketInstance, i: usize, lambda_v: f64, lambda_b: f64) -> Result<MarketInstance> {
    if i >= inst.num_bidders() {
        return Err(FppeError::InvalidArgument(format!(
            "bidder {i} out of range for {} bidders",
            inst.num_bidders()
        )));
    }
    let mut rows = inst.values().to_rows();
    for v in &mut rows[i] {
        *v *= lambda_v;
    }
    let mut budgets = inst.budgets().to_vec();
    budgets[i] *= lambda_b;
    MarketInstance::new(Matrix::from_rows(&rows)?, budgets)
}

fn true_utility(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> f64 {
    (0..inst.num_goods())
        .map(|j| outcome.allocation[(i, j)] * (inst.value(i, j) - outcome.prices[j]))
        .sum()
}

/// Solves the market for every `(lambda_v, lambda_b)` report of bidder `i`
/// and measures the bidder's true utility against truthful reporting.
pub fn misreport_grid(
    inst: &MarketInstance,
    i: usize,
    lambdas: &[f64],
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<MisreportReport> {
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(FppeError::InvalidArgument(format!("lambda values must be positive (got {l})")));
    }
    let truthful = solve_dual(inst, cfg)?;
    if !truthful.converged() {
        return Err(FppeError::InvalidArgument(format!(
            "truthful instance did not converge (residual {:e})",
            truthful.residual
        )));
    }
    let base = true_utility(inst, &truthful.outcome, i);
    let k = lambdas.len();
    let cells = map_range(exec, k * k, |c| -> Result<MisreportCell> {
        let (lambda_v, lambda_b) = (lambdas[c / k], lambdas[c % k]);
        let sol = solve_dual(&misreport_instance(inst, i, lambda_v, lambda_b)?, cfg)?;
        Ok(if sol.converged() {
            let u = true_utility(inst, &sol.outcome, i);
            MisreportCell { lambda_v, lambda_b, converged: true, utility: u, gain: u - base }
        } else {
            MisreportCell { lambda_v, lambda_b, converged: false, utility: f64::NAN, gain: f64::NAN }
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let skipped = cells.iter().filter(|c| !c.converged).count();
    Ok(MisreportReport { bidder: i, truthful_utility: base, cells, skipped })
}

pub const MISREPORT_CSV_HEADER: [&str; 6] = ["bidder", "lambda_v", "lambda_b", "converged", "utility", "gain"];

pub fn write_misreport_csv<W: Write>(report: &MisreportReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MISREPORT_CSV_HEADER)?;
    for c in &report.cells {
        w.write_record([
            report.bidder.to_string(),
            c.lambda_v.to_string(),
            c.lambda_b.to_string(),
            c.converged.to_string(),
            c.utility.to_string(),
            c.gain.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solved(rows: &[Vec<f64>], budgets: &[f64]) -> (MarketInstance, PacingOutcome) {
        let inst = MarketInstance::from_rows(rows, budgets).unwrap();
        let sol = solve_dual(&inst, &SolverConfig::default()).unwrap();
        assert!(sol.converged());
        (inst, sol.outcome)
    }

    #[test]
    fn reserves_exclude_the_deviator() {
        let (inst, out) = solved(&[vec![10.0, 5.0], vec![0.0, 5.0]], &[10.0, 5.0]);
        assert_eq!(reserve_prices(&inst, &out, 0), vec![0.0, 5.0]);
        let (inst, out) = solved(&[vec![10.0]], &[1.0]);
        assert_eq!(reserve_prices(&inst, &out, 0), vec![0.0]);
    }

    #[test]
    fn bid_deviation_takes_the_free_good() {
        let (inst, out) = solved(&[vec![10.0, 5.0], vec![0.0, 5.0]], &[10.0, 5.0]);
        assert!((best_response_bids(&inst, &out, 0) - 10.0).abs() < 1e-9);
        assert!(out.utility[0].abs() < 1e-9);
    }

    #[test]
    fn budget_capped_bidder_has_no_bid_regret() {
        let (inst, out) = solved(&[vec![10.0], vec![2.0]], &[1.0, 1.0]);
        let r = reserve_prices(&inst, &out, 1);
        assert!((r[0] - 2.0).abs() < 1e-9);
        let br = best_response_bids(&inst, &out, 0);
        assert!((br - 4.0).abs() < 1e-6, "{br}");
        assert!((out.utility[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn multiplier_sweep_reaches_the_floor() {
        let (inst, out) = solved(&[vec![10.0, 5.0], vec![0.0, 5.0]], &[10.0, 5.0]);
        let (a, u) = best_response_multiplier(&inst, &out, 0);
        assert_eq!(a, ALPHA_FLOOR);
        assert!((u - 10.0 * (1.0 - ALPHA_FLOOR)).abs() < 1e-9);
        let (inst, out) = solved(&[vec![1.0]], &[10.0]);
        let (a, u) = best_response_multiplier(&inst, &out, 0);
        assert_eq!(a, ALPHA_FLOOR);
        assert!((u - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bidder_valuing_nothing_gains_nothing() {
        let (inst, out) = solved(&[vec![1.0, 1.0], vec![0.0, 0.0]], &[1.0, 1.0]);
        assert_eq!(best_response_multiplier(&inst, &out, 1), (0.0, 0.0));
        assert_eq!(best_response_bids(&inst, &out, 1), 0.0);
    }

    #[test]
    fn regret_formula_and_cap() {
        assert_eq!(relative_regret(4.0, 4.0), Regret { value: 0.0, capped: false });
        assert_eq!(relative_regret(1.0, 1.5).value, 0.5);
        assert_eq!(relative_regret(0.0, 10.0), Regret { value: REGRET_CAP, capped: true });
    }

    #[test]
    fn misreport_truthful_cell_gains_nothing() {
        let inst = MarketInstance::from_rows(&[vec![10.0], vec![2.0]], &[1.0, 1.0]).unwrap();
        let rep = misreport_grid(&inst, 1, &standard_lambdas(), &SolverConfig::default(), Execution::Sequential).unwrap();
        assert_eq!(rep.cells.len(), 121);
        let truthful = rep.cells.iter().find(|c| c.lambda_v == 1.0 && c.lambda_b == 1.0).unwrap();
        assert_eq!(truthful.gain, 0.0);
        assert!(rep.best().unwrap().gain >= 0.0);
    }

    #[test]
    fn shading_helps_a_lone_constrained_bidder() {
        // v = 2, B = 1 pays its whole budget; reporting a lower value lowers
        // the price it pays for the same good
        let inst = MarketInstance::from_rows(&[vec![2.0]], &[1.0]).unwrap();
        let rep = misreport_grid(&inst, 0, &standard_lambdas(), &SolverConfig::default(), Execution::Sequential).unwrap();
        assert!(rep.best().unwrap().gain > 0.0);
    }

    #[test]
    fn grid_cells_in_order() {
        let g = RegretGrid::standard(0);
        let cells = g.cells();
        assert_eq!(cells.len(), 4 * 6 * 5);
        assert_eq!(cells[0], (2, 4, 0));
        assert_eq!(cells[5], (2, 6, 0));
    }
}
