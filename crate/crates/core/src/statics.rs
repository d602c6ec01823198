//! Instance edits and the monotonicity, sensitivity and shill-bidding
//! suites built on them.
//!
//! A suite solves an instance before and after one edit and records, for
//! each relation it checks, the signed margin by which the relation holds.
//! Relations that FPPE theory guarantees are asserted; the rest (for
//! example welfare after adding a bidder, which can go either way) only
//! record the direction of change.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::distributions::Open01;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checks::metrics;
use crate::error::{FppeError, Result};
use crate::market::{generate_complete_graph, MarketInstance, Matrix, SolverConfig};
use crate::par::{map_range, Execution};
use crate::solve_dual;

/// Relative tolerance of every statics assertion.
pub const STATICS_REL_TOL: f64 = 1e-5;

/// Scale-aware tolerance `1e-5 * max(1, |before|)`.
pub fn statics_tol(before: f64) -> f64 {
    STATICS_REL_TOL * before.abs().max(1.0)
}

pub fn add_good(inst: &MarketInstance, column: &[f64]) -> Result<MarketInstance> {
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    if column.len() != n {
        return Err(FppeError::Dimension(format!("new good has {} values for {n} bidders", column.len())));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = Vec::with_capacity(m + 1);
            r.extend_from_slice(inst.values().row(i));
            r.push(column[i]);
            r
        })
        .collect();
    MarketInstance::from_rows(&rows, inst.budgets())
}

pub fn add_bidder(inst: &MarketInstance, row: &[f64], budget: f64) -> Result<MarketInstance> {
    if row.len() != inst.num_goods() {
        return Err(FppeError::Dimension(format!(
            "new bidder has {} values for {} goods",
            row.len(),
            inst.num_goods()
        )));
    }
    let mut rows = inst.values().to_rows();
    rows.push(row.to_vec());
    let mut budgets = inst.budgets().to_vec();
    budgets.push(budget);
    MarketInstance::from_rows(&rows, &budgets)
}

fn check_bidder(inst: &MarketInstance, i: usize) -> Result<()> {
    if i >= inst.num_bidders() {
        return Err(FppeError::InvalidArgument(format!(
            "bidder {i} out of range for {} bidders",
            inst.num_bidders()
        )));
    }
    Ok(())
}

fn with_budget(inst: &MarketInstance, i: usize, budget: f64) -> Result<MarketInstance> {
    check_bidder(inst, i)?;
    let (values, mut budgets) = inst.clone().into_parts();
    budgets[i] = budget;
    MarketInstance::new(values, budgets)
}

pub fn add_budget(inst: &MarketInstance, i: usize, delta: f64) -> Result<MarketInstance> {
    check_bidder(inst, i)?;
    with_budget(inst, i, inst.budget(i) + delta)
}

pub fn scale_budget(inst: &MarketInstance, i: usize, factor: f64) -> Result<MarketInstance> {
    check_bidder(inst, i)?;
    with_budget(inst, i, inst.budget(i) * factor)
}

pub fn set_value(inst: &MarketInstance, i: usize, j: usize, value: f64) -> Result<MarketInstance> {
    check_bidder(inst, i)?;
    if j >= inst.num_goods() {
        return Err(FppeError::InvalidArgument(format!(
            "good {j} out of range for {} goods",
            inst.num_goods()
        )));
    }
    let (values, budgets) = inst.clone().into_parts();
    let mut rows = values.to_rows();
    rows[i][j] = value;
    MarketInstance::new(Matrix::from_rows(&rows)?, budgets)
}

/// One instance edit with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum Edit {
    AddGood { column: Vec<f64> },
    AddBidder { row: Vec<f64>, budget: f64 },
    AddBudget { bidder: usize, delta: f64 },
    ScaleBudget { bidder: usize, factor: f64 },
    SetValue { bidder: usize, good: usize, value: f64 },
}

impl Edit {
    pub fn apply(&self, inst: &MarketInstance) -> Result<MarketInstance> {
        match self {
            Edit::AddGood { column } => add_good(inst, column),
            Edit::AddBidder { row, budget } => add_bidder(inst, row, *budget),
            Edit::AddBudget { bidder, delta } => add_budget(inst, *bidder, *delta),
            Edit::ScaleBudget { bidder, factor } => scale_budget(inst, *bidder, *factor),
            Edit::SetValue { bidder, good, value } => set_value(inst, *bidder, *good, *value),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Edit::AddGood { .. } => "add_good",
            Edit::AddBidder { .. } => "add_bidder",
            Edit::AddBudget { .. } => "add_budget",
            Edit::ScaleBudget { .. } => "scale_budget",
            Edit::SetValue { .. } => "set_value",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    RevenueNondecreasing,
    WelfareNondecreasing,
    /// Componentwise over the bidders present before the edit.
    AlphaNonincreasing,
    AlphaNondecreasing,
    /// `0 <= revenue gain <= delta` after adding `delta` to one budget.
    RevenueGainWithinDelta,
    /// `SW' >= (1 - d - d^2) / (1 + d) * SW` after scaling a budget by `1 + d`.
    WelfareRatioAtLeast,
    /// `SW' <= (1 + d) * SW` after scaling a budget by `1 + d`.
    WelfareRatioAtMost,
    /// `alpha <= alpha' <= (1 + d) * alpha` after scaling a budget by `1 + d`.
    AlphaSandwich,
    /// Revenue from the original bidders after a fake bidder joins is at
    /// most the original revenue.
    ShillRevenueAtMostBaseline,
    RevenueDirection,
    WelfareDirection,
}

impl Relation {
    /// Whether theory guarantees the relation; otherwise only the signed
    /// change is recorded.
    pub fn guaranteed(self) -> bool {
        !matches!(self, Relation::RevenueDirection | Relation::WelfareDirection)
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::RevenueNondecreasing => "revenue_nondecreasing",
            Relation::WelfareNondecreasing => "welfare_nondecreasing",
            Relation::AlphaNonincreasing => "alpha_nonincreasing",
            Relation::AlphaNondecreasing => "alpha_nondecreasing",
            Relation::RevenueGainWithinDelta => "revenue_gain_within_delta",
            Relation::WelfareRatioAtLeast => "welfare_ratio_at_least",
            Relation::WelfareRatioAtMost => "welfare_ratio_at_most",
            Relation::AlphaSandwich => "alpha_sandwich",
            Relation::ShillRevenueAtMostBaseline => "shill_revenue_at_most_baseline",
            Relation::RevenueDirection => "revenue_direction",
            Relation::WelfareDirection => "welfare_direction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub revenue: f64,
    pub social_welfare: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticsRecord {
    /// Index of the base instance in its source.
    pub instance: usize,
    pub edit: Edit,
    pub before: Snapshot,
    /// For shill records, `after.revenue` counts the original bidders only.
    pub after: Snapshot,
    pub relation: Relation,
    pub guaranteed: bool,
    pub holds: bool,
    /// Signed margin; the relation holds when `slack >= -tol`.
    pub slack: f64,
    pub tol: f64,
}

impl StaticsRecord {
    pub fn violated(&self) -> bool {
        self.guaranteed && !self.holds
    }
}

/// Records of one suite run, in instance order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SuiteReport {
    pub records: Vec<StaticsRecord>,
    /// Instance pairs dropped because a solve did not converge.
    pub skipped: usize,
    pub pairs: usize,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.violated()).count()
    }

    fn merge(parts: Vec<(Vec<StaticsRecord>, usize, usize)>) -> Self {
        let mut out = SuiteReport::default();
        for (records, skipped, pairs) in parts {
            out.records.extend(records);
            out.skipped += skipped;
            out.pairs += pairs;
        }
        out
    }
}

/// Where suite instances come from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    /// Instance `k` draws its size uniformly from the ranges and its values
    /// from the complete-graph generator, all from RNG stream `k` of `seed`.
    CompleteGraph {
        bidders: RangeInclusive<usize>,
        goods: RangeInclusive<usize>,
        seed: u64,
        budget_scale: f64,
    },
    /// Cycles through the given instances.
    Fixed(Vec<MarketInstance>),
}

impl InstanceSource {
    /// The random complete-graph family used throughout the experiments:
    /// 2..=8 bidders, 4..=14 goods, budget scale 0.5.
    pub fn standard(seed: u64) -> Self {
        InstanceSource::CompleteGraph { bidders: 2..=8, goods: 4..=14, seed, budget_scale: 0.5 }
    }

    /// Instance `k` and an RNG for edit parameters private to it.
    pub fn draw(&self, k: usize) -> Result<(MarketInstance, ChaCha8Rng)> {
        match self {
            InstanceSource::CompleteGraph { bidders, goods, seed, budget_scale } => {
                if bidders.is_empty() || goods.is_empty() {
                    return Err(FppeError::InvalidArgument("empty size range".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                let n = rng.gen_range(bidders.clone());
                let m = rng.gen_range(goods.clone());
                let inst_seed: u64 = rng.gen();
                Ok((generate_complete_graph(n, m, inst_seed, *budget_scale)?, rng))
            }
            InstanceSource::Fixed(list) => {
                if list.is_empty() {
                    return Err(FppeError::InvalidArgument("no fixed instances".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                rng.set_stream(k as u64);
                Ok((list[k % list.len()].clone(), rng))
            }
        }
    }
}

/// Solves `inst`; `None` when the solve misses the tolerance.
pub fn snapshot(inst: &MarketInstance, cfg: &SolverConfig) -> Result<Option<Snapshot>> {
    let sol = solve_dual(inst, cfg)?;
    if !sol.converged() {
        return Ok(None);
    }
    let m = metrics(inst, &sol.outcome);
    Ok(Some(Snapshot { revenue: m.revenue, social_welfare: m.social_welfare, alpha: sol.outcome.alpha }))
}

fn record(
    instance: usize,
    edit: &Edit,
    before: &Snapshot,
    after: &Snapshot,
    relation: Relation,
    slack: f64,
    tol: f64,
) -> StaticsRecord {
    let guaranteed = relation.guaranteed();
    StaticsRecord {
        instance,
        edit: edit.clone(),
        before: before.clone(),
        after: after.clone(),
        relation,
        guaranteed,
        holds: !guaranteed || slack >= -tol,
        slack,
        tol,
    }
}

/// Smallest `after_i - before_i` over shared bidders.
fn min_increase(before: &[f64], after: &[f64]) -> f64 {
    before.iter().zip(after).map(|(b, a)| a - b).fold(f64::INFINITY, f64::min)
}

fn relations_for(edit: &Edit) -> &'static [Relation] {
    use Relation::*;
    match edit {
        Edit::AddGood { .. } => &[RevenueNondecreasing, WelfareNondecreasing, AlphaNonincreasing],
        Edit::AddBidder { .. } => &[RevenueNondecreasing, WelfareDirection],
        Edit::AddBudget { .. } => &[RevenueNondecreasing, AlphaNondecreasing, WelfareDirection],
        Edit::ScaleBudget { .. } => &[RevenueNondecreasing, AlphaNondecreasing, WelfareDirection],
        Edit::SetValue { .. } => &[RevenueDirection, WelfareDirection],
    }
}

/// Checks the monotonicity relations of one solved pair.
pub fn monotonicity_records(instance: usize, edit: &Edit, before: &Snapshot, after: &Snapshot) -> Vec<StaticsRecord> {
    let alpha_tol = statics_tol(1.0);
    relations_for(edit)
        .iter()
        .map(|&rel| {
            let (slack, tol) = match rel {
                Relation::RevenueNondecreasing | Relation::RevenueDirection => {
                    (after.revenue - before.revenue, statics_tol(before.revenue))
                }
                Relation::WelfareNondecreasing | Relation::WelfareDirection => {
                    (after.social_welfare - before.social_welfare, statics_tol(before.social_welfare))
                }
                Relation::AlphaNonincreasing => (min_increase(&after.alpha, &before.alpha), alpha_tol),
                Relation::AlphaNondecreasing => (min_increase(&before.alpha, &after.alpha), alpha_tol),
                _ => unreachable!("not a monotonicity relation"),
            };
            record(instance, edit, before, after, rel, slack, tol)
        })
        .collect()
}

/// Solves `inst` and `edit(inst)`; `None` when either solve misses the
/// tolerance.
pub fn edit_pair(inst: &MarketInstance, edit: &Edit, cfg: &SolverConfig) -> Result<Option<Snapshot>> {
    snapshot(&edit.apply(inst)?, cfg)
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

fn mean_budget(inst: &MarketInstance) -> f64 {
    inst.total_budget() / inst.num_bidders() as f64
}

/// One random edit of each monotonicity kind: a new good, a new bidder, a
/// budget increase and a value increase.
pub fn random_monotonicity_edits(inst: &MarketInstance, rng: &mut ChaCha8Rng) -> Vec<Edit> {
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    let column: Vec<f64> = (0..n).map(|_| uniform(rng)).collect();
    let row: Vec<f64> = (0..m).map(|_| uniform(rng)).collect();
    let budget = 2.0 * uniform(rng) * mean_budget(inst);
    let bidder = rng.gen_range(0..n);
    let delta = uniform(rng) * mean_budget(inst);
    let (vi, vj) = (rng.gen_range(0..n), rng.gen_range(0..m));
    let value = inst.value(vi, vj) + uniform(rng);
    vec![
        Edit::AddGood { column },
        Edit::AddBidder { row, budget },
        Edit::AddBudget { bidder, delta },
        Edit::SetValue { bidder: vi, good: vj, value },
    ]
}

fn run_pairs<F>(
    source: &InstanceSource,
    count: usize,
    pairs_per_instance: usize,
    cfg: &SolverConfig,
    exec: Execution,
    per_instance: F,
) -> Result<SuiteReport>
where
    F: Fn(usize, &MarketInstance, &mut ChaCha8Rng, &Snapshot) -> Result<(Vec<StaticsRecord>, usize, usize)>
        + Sync
        + Send,
{
    let parts = map_range(exec, count, |k| -> Result<(Vec<StaticsRecord>, usize, usize)> {
        let (inst, mut rng) = source.draw(k)?;
        match snapshot(&inst, cfg)? {
            Some(before) => per_instance(k, &inst, &mut rng, &before),
            // a failed base solve drops every pair built on it
            None => Ok((Vec::new(), pairs_per_instance, pairs_per_instance)),
        }
    });
    Ok(SuiteReport::merge(parts.into_iter().collect::<Result<Vec<_>>>()?))
}

pub fn run_monotonicity_suite(
    source: &InstanceSource,
    count: usize,
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<SuiteReport> {
    run_pairs(source, count, 4, cfg, exec, |k, inst, rng, before| {
        let mut records = Vec::new();
        let (mut skipped, mut pairs) = (0, 0);
        for edit in random_monotonicity_edits(inst, rng) {
            pairs += 1;
            match edit_pair(inst, &edit, cfg)? {
                Some(after) => records.extend(monotonicity_records(k, &edit, before, &after)),
                None => skipped += 1,
            }
        }
        Ok((records, skipped, pairs))
    })
}

/// Checks the additive revenue bound of a `B_i + delta` pair.
pub fn additive_records(instance: usize, edit: &Edit, delta: f64, before: &Snapshot, after: &Snapshot) -> Vec<StaticsRecord> {
    let gain = after.revenue - before.revenue;
    vec![record(
        instance,
        edit,
        before,
        after,
        Relation::RevenueGainWithinDelta,
        gain.min(delta - gain),
        statics_tol(before.revenue),
    )]
}

/// Checks the welfare ratio bounds and the multiplier sandwich of a
/// `(1 + delta) B_i` pair.
pub fn multiplicative_records(
    instance: usize,
    edit: &Edit,
    delta: f64,
    before: &Snapshot,
    after: &Snapshot,
) -> Vec<StaticsRecord> {
    let (sw, sw2) = (before.social_welfare, after.social_welfare);
    let lower = (1.0 - delta - delta * delta) / (1.0 + delta);
    let tol = statics_tol(sw);
    let sandwich = before
        .alpha
        .iter()
        .zip(&after.alpha)
        .map(|(a, a2)| (a2 - a).min((1.0 + delta) * a - a2))
        .fold(f64::INFINITY, f64::min);
    vec![
        record(instance, edit, before, after, Relation::WelfareRatioAtLeast, sw2 - lower * sw, tol),
        record(instance, edit, before, after, Relation::WelfareRatioAtMost, (1.0 + delta) * sw - sw2, tol),
        record(instance, edit, before, after, Relation::AlphaSandwich, sandwich, statics_tol(1.0)),
    ]
}

/// For every instance, one random bidder gets each `delta` both added to
/// and multiplied into (as `1 + delta`) its budget.
pub fn run_sensitivity_suite(
    source: &InstanceSource,
    count: usize,
    deltas: &[f64],
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<SuiteReport> {
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(FppeError::InvalidArgument(format!("deltas must be finite and nonnegative (got {d})")));
    }
    run_pairs(source, count, 2 * deltas.len(), cfg, exec, |k, inst, rng, before| {
        let bidder = rng.gen_range(0..inst.num_bidders());
        let mut records = Vec::new();
        let (mut skipped, mut pairs) = (0, 0);
        for &delta in deltas {
            let add = Edit::AddBudget { bidder, delta };
            pairs += 1;
            match edit_pair(inst, &add, cfg)? {
                Some(after) => records.extend(additive_records(k, &add, delta, before, &after)),
                None => skipped += 1,
            }
            let scale = Edit::ScaleBudget { bidder, factor: 1.0 + delta };
            pairs += 1;
            match edit_pair(inst, &scale, cfg)? {
                Some(after) => records.extend(multiplicative_records(k, &scale, delta, before, &after)),
                None => skipped += 1,
            }
        }
        Ok((records, skipped, pairs))
    })
}

/// Adds a fake bidder and compares the revenue collected from the original
/// bidders against the original equilibrium revenue. `None` when either
/// solve misses the tolerance.
pub fn shill_proofness_check(
    inst: &MarketInstance,
    fake_row: &[f64],
    fake_budget: f64,
    cfg: &SolverConfig,
) -> Result<Option<StaticsRecord>> {
    shill_record(0, inst, fake_row, fake_budget, cfg)
}

fn shill_record(
    instance: usize,
    inst: &MarketInstance,
    fake_row: &[f64],
    fake_budget: f64,
    cfg: &SolverConfig,
) -> Result<Option<StaticsRecord>> {
    let Some(before) = snapshot(inst, cfg)? else {
        return Ok(None);
    };
    let edit = Edit::AddBidder { row: fake_row.to_vec(), budget: fake_budget };
    let shilled = edit.apply(inst)?;
    let sol = solve_dual(&shilled, cfg)?;
    if !sol.converged() {
        return Ok(None);
    }
    let n = inst.num_bidders();
    let real_revenue: f64 = sol.outcome.spend[..n].iter().sum();
    let m = metrics(&shilled, &sol.outcome);
    let after = Snapshot { revenue: real_revenue, social_welfare: m.social_welfare, alpha: sol.outcome.alpha };
    Ok(Some(record(
        instance,
        &edit,
        &before,
        &after,
        Relation::ShillRevenueAtMostBaseline,
        before.revenue - real_revenue,
        statics_tol(before.revenue),
    )))
}

/// Shill check with a random fake bidder per instance: values uniform on
/// (0, 1) and budget uniform on (0, 2) times the mean budget.
pub fn run_shill_suite(
    source: &InstanceSource,
    count: usize,
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<SuiteReport> {
    let parts = map_range(exec, count, |k| -> Result<(Vec<StaticsRecord>, usize, usize)> {
        let (inst, mut rng) = source.draw(k)?;
        let row: Vec<f64> = (0..inst.num_goods()).map(|_| uniform(&mut rng)).collect();
        let budget = 2.0 * uniform(&mut rng) * mean_budget(&inst);
        Ok(match shill_record(k, &inst, &row, budget, cfg)? {
            Some(r) => (vec![r], 0, 1),
            None => (Vec::new(), 1, 1),
        })
    });
    Ok(SuiteReport::merge(parts.into_iter().collect::<Result<Vec<_>>>()?))
}

/// CSV header of [`write_statics_csv`].
pub const STATICS_CSV_HEADER: [&str; 14] = [
    "instance",
    "edit",
    "params",
    "relation",
    "guaranteed",
    "holds",
    "slack",
    "tol",
    "revenue_before",
    "revenue_after",
    "sw_before",
    "sw_after",
    "alpha_before",
    "alpha_after",
];

/// One row per record. Numbers use shortest round-trip formatting and
/// vectors are JSON arrays.
pub fn write_statics_csv<W: Write>(records: &[StaticsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATICS_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.instance.to_string(),
            r.edit.name().to_string(),
            serde_json::to_string(&r.edit)?,
            r.relation.name().to_string(),
            r.guaranteed.to_string(),
            r.holds.to_string(),
            r.slack.to_string(),
            r.tol.to_string(),
            r.before.revenue.to_string(),
            r.after.revenue.to_string(),
            r.before.social_welfare.to_string(),
            r.after.social_welfare.to_string(),
            serde_json::to_string(&r.before.alpha)?,
            serde_json::to_string(&r.after.alpha)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}
