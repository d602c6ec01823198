//! Residual-style verification of pacing outcomes.
//!
//! Every check returns nonnegative violation magnitudes rather than a
//! boolean, so each tolerance decision stays visible to the caller. Spend,
//! utilities and the KKT auxiliaries are recomputed from `(alpha, x, p)`
//! and the instance; the cached fields of [`PacingOutcome`] are not trusted.

use serde::Serialize;

use crate::knapsack::fractional_knapsack;
use crate::market::{MarketInstance, PacingOutcome};

/// Largest violation of each budget-feasible pacing condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BfpmResiduals {
    /// `|p_j - max_i alpha_i v_ij|`
    pub prices: f64,
    /// Bid gap of any bidder holding part of a good without the top bid.
    pub highest_bidders: f64,
    /// Overspend beyond the budget.
    pub budget: f64,
    /// `|sum_i x_ij - 1|` over priced goods.
    pub full_sale: f64,
    pub no_overselling: f64,
    /// Multipliers or allocation shares outside `[0, 1]`.
    pub range: f64,
}

impl BfpmResiduals {
    pub fn max(&self) -> f64 {
        [self.prices, self.highest_bidders, self.budget, self.full_sale, self.no_overselling, self.range]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ErceResiduals {
    /// Best budget-feasible utility at the prices minus realized utility.
    pub demand_gap: f64,
    /// Deviation from a single value-per-money rate per bidder.
    pub equal_rate_gap: f64,
}

impl ErceResiduals {
    pub fn max(&self) -> f64 {
        self.demand_gap.max(self.equal_rate_gap)
    }
}

/// Residuals of the seven primal KKT conditions of the Eisenberg-Gale
/// program, indexed 1..=7 through [`KktResiduals::get`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct KktResiduals(pub [f64; 7]);

impl KktResiduals {
    pub fn get(&self, condition: usize) -> f64 {
        self.0[condition - 1]
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub revenue: f64,
    pub social_welfare: f64,
    pub paced_welfare: f64,
    pub utilities: Vec<f64>,
    pub bang_per_buck: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub bfpm: BfpmResiduals,
    pub fppe: f64,
    pub erce: ErceResiduals,
    pub kkt: KktResiduals,
    pub revenue: f64,
    pub social_welfare: f64,
    pub paced_welfare: f64,
}

impl EquilibriumReport {
    /// Largest residual over every check.
    pub fn max_residual(&self) -> f64 {
        self.bfpm.max().max(self.fppe).max(self.erce.max()).max(self.kkt.max())
    }

    /// Flat key/number view for CSV or JSON emission.
    pub fn flat(&self) -> Vec<(&'static str, f64)> {
        let b = &self.bfpm;
        let k = &self.kkt.0;
        vec![
            ("bfpm_prices", b.prices),
            ("bfpm_highest_bidders", b.highest_bidders),
            ("bfpm_budget", b.budget),
            ("bfpm_full_sale", b.full_sale),
            ("bfpm_no_overselling", b.no_overselling),
            ("bfpm_range", b.range),
            ("fppe_pacing_slack", self.fppe),
            ("erce_demand_gap", self.erce.demand_gap),
            ("erce_equal_rate_gap", self.erce.equal_rate_gap),
            ("kkt_1", k[0]),
            ("kkt_2", k[1]),
            ("kkt_3", k[2]),
            ("kkt_4", k[3]),
            ("kkt_5", k[4]),
            ("kkt_6", k[5]),
            ("kkt_7", k[6]),
            ("revenue", self.revenue),
            ("social_welfare", self.social_welfare),
            ("paced_welfare", self.paced_welfare),
        ]
    }
}

fn spend_of(outcome: &PacingOutcome, i: usize) -> f64 {
    outcome.allocation.row(i).iter().zip(&outcome.prices).map(|(x, p)| x * p).sum()
}

fn value_of(inst: &MarketInstance, outcome: &PacingOutcome, i: usize) -> f64 {
    outcome.allocation.row(i).iter().zip(inst.values().row(i)).map(|(x, v)| x * v).sum()
}

fn sold(outcome: &PacingOutcome, j: usize) -> f64 {
    outcome.allocation.column(j).sum()
}

pub fn check_bfpm(inst: &MarketInstance, outcome: &PacingOutcome, tol: f64) -> BfpmResiduals {
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    let mut r = BfpmResiduals::default();
    for &a in &outcome.alpha {
        r.range = r.range.max(-a).max(a - 1.0);
    }
    for j in 0..m {
        let top = (0..n).map(|i| outcome.alpha[i] * inst.value(i, j)).fold(0.0, f64::max);
        let p = outcome.prices[j];
        r.prices = r.prices.max((p - top).abs());
        for i in 0..n {
            let x = outcome.allocation[(i, j)];
            r.range = r.range.max(-x).max(x - 1.0);
            if x > 0.0 {
                r.highest_bidders = r.highest_bidders.max(top - outcome.alpha[i] * inst.value(i, j));
            }
        }
        let total = sold(outcome, j);
        if p > tol {
            r.full_sale = r.full_sale.max((total - 1.0).abs());
        }
        r.no_overselling = r.no_overselling.max(total - 1.0);
    }
    for i in 0..n {
        r.budget = r.budget.max(spend_of(outcome, i) - inst.budget(i));
    }
    r
}

/// Largest pacing slack: `min(1 - alpha_i, (B_i - spend_i) / B_i)` over
/// bidders, clipped at zero.
pub fn check_fppe(inst: &MarketInstance, outcome: &PacingOutcome, _tol: f64) -> f64 {
    (0..inst.num_bidders())
        .map(|i| {
            let b = inst.budget(i);
            let slack = (b - spend_of(outcome, i)) / b;
            (1.0 - outcome.alpha[i]).min(slack)
        })
        .fold(0.0, f64::max)
}

pub fn check_erce(inst: &MarketInstance, outcome: &PacingOutcome, tol: f64) -> ErceResiduals {
    let mut r = ErceResiduals::default();
    for i in 0..inst.num_bidders() {
        let values = inst.values().row(i);
        let budget = inst.budget(i);
        let best = fractional_knapsack(values, &outcome.prices, budget);
        let spend = spend_of(outcome, i);
        let realized = value_of(inst, outcome, i) - spend;
        r.demand_gap = r.demand_gap.max(best.utility - realized);

        let rate = 1.0 / outcome.alpha[i];
        for (j, &v) in values.iter().enumerate() {
            let p = outcome.prices[j];
            if outcome.allocation[(i, j)] > 0.0 && p > 0.0 {
                r.equal_rate_gap = r.equal_rate_gap.max((v / p - rate).abs());
            }
        }
        if budget - spend > tol * budget.max(1.0) {
            r.equal_rate_gap = r.equal_rate_gap.max((rate - 1.0).abs());
        }
    }
    r
}

/// Residuals of the primal KKT conditions with `beta = alpha`, leftover
/// `delta_i = B_i - spend_i` for unpaced bidders (zero otherwise) and
/// `u_i = max(B_i, sum_j x_ij v_ij + delta_i)`.
pub fn kkt_residuals(inst: &MarketInstance, outcome: &PacingOutcome, tol: f64) -> KktResiduals {
    let mut r = [0.0f64; 7];
    let beta = &outcome.alpha;
    let x = &outcome.allocation;
    let p = &outcome.prices;
    for i in 0..inst.num_bidders() {
        let b = inst.budget(i);
        let delta = if beta[i] >= 1.0 - tol { b - spend_of(outcome, i) } else { 0.0 };
        let u = b.max(value_of(inst, outcome, i) + delta);
        r[0] = r[0].max((u - b / beta[i]).abs());
        r[1] = r[1].max(beta[i] - 1.0);
        r[3] = r[3].max(-beta[i]).max(-delta);
        if delta > tol {
            r[5] = r[5].max((beta[i] - 1.0).abs());
        }
        for j in 0..inst.num_goods() {
            let v = inst.value(i, j);
            if v > 0.0 {
                r[2] = r[2].max(beta[i] - p[j] / v);
            }
            r[3] = r[3].max(-x[(i, j)]);
            if x[(i, j)] > tol {
                let gap = if v > 0.0 {
                    (beta[i] - p[j] / v).abs()
                } else if p[j] > tol {
                    f64::INFINITY
                } else {
                    0.0
                };
                r[6] = r[6].max(gap);
            }
        }
    }
    for (j, &pj) in p.iter().enumerate() {
        r[3] = r[3].max(-pj);
        if pj > tol {
            r[4] = r[4].max((sold(outcome, j) - 1.0).abs());
        }
    }
    KktResiduals(r.map(|v| if v.is_nan() { f64::INFINITY } else { v.max(0.0) }))
}

pub fn metrics(inst: &MarketInstance, outcome: &PacingOutcome) -> Metrics {
    let n = inst.num_bidders();
    let spend: Vec<f64> = (0..n).map(|i| spend_of(outcome, i)).collect();
    let value: Vec<f64> = (0..n).map(|i| value_of(inst, outcome, i)).collect();
    Metrics {
        revenue: spend.iter().sum(),
        social_welfare: value.iter().sum(),
        paced_welfare: value.iter().zip(&outcome.alpha).map(|(v, a)| a * v).sum(),
        utilities: value.iter().zip(&spend).map(|(v, s)| v - s).collect(),
        bang_per_buck: outcome.alpha.iter().map(|a| 1.0 / a).collect(),
    }
}

/// Runs every check and collects the market metrics.
pub fn certify(inst: &MarketInstance, outcome: &PacingOutcome, tol: f64) -> EquilibriumReport {
    let mut bfpm = check_bfpm(inst, outcome, tol);
    let mut fppe = check_fppe(inst, outcome, tol);
    let mut erce = check_erce(inst, outcome, tol);
    let kkt = kkt_residuals(inst, outcome, tol);
    let m = metrics(inst, outcome);
    // NaN never passes a tolerance test
    for v in [
        &mut bfpm.prices,
        &mut bfpm.highest_bidders,
        &mut bfpm.budget,
        &mut bfpm.full_sale,
        &mut bfpm.no_overselling,
        &mut bfpm.range,
        &mut fppe,
        &mut erce.demand_gap,
        &mut erce.equal_rate_gap,
    ] {
        *v = if v.is_nan() { f64::INFINITY } else { v.max(0.0) };
    }
    EquilibriumReport {
        bfpm,
        fppe,
        erce,
        kkt,
        revenue: m.revenue,
        social_welfare: m.social_welfare,
        paced_welfare: m.paced_welfare,
    }
}
