//! Price-space dual of the quasi-linear Eisenberg-Gale program.
//!
//! With the utility rates eliminated, the dual objective is
//!
//! ```text
//! phi(p) = sum_j p_j - sum_i B_i log beta_i(p),
//! beta_i(p) = min(1, min_{j : v_ij > 0} p_j / v_ij)
//! ```
//!
//! which is convex in `p`. Its minimizer gives the first-price pacing
//! equilibrium prices, and the rates at the minimizer are the pacing
//! multipliers.

mod polish;
mod smooth;
mod solve;

use serde::Serialize;

pub use self::polish::polish_candidates;
pub use self::solve::{solve_dual, Solution, SolveStatus};
use crate::error::{FppeError, Result};
use crate::market::MarketInstance;

const EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPoint {
    pub prices: Vec<f64>,
    pub rates: Vec<f64>,
    pub objective: f64,
}

impl DualPoint {
    pub fn at(inst: &MarketInstance, prices: Vec<f64>) -> Result<Self> {
        let rates = bidder_rates(inst, &prices)?.into_iter().map(|r| r.rate).collect();
        let objective = dual_objective(inst, &prices)?;
        Ok(Self { prices, rates, objective })
    }
}

/// Utility rate of one bidder at a price vector, with the good attaining the
/// minimum price-to-value ratio when that minimum is below one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Rate {
    pub rate: f64,
    pub argmin: Option<usize>,
}

fn check_domain(inst: &MarketInstance, prices: &[f64]) -> Result<()> {
    if prices.len() != inst.num_goods() {
        return Err(FppeError::Dimension(format!(
            "{} prices for {} goods",
            prices.len(),
            inst.num_goods()
        )));
    }
    for (j, &p) in prices.iter().enumerate() {
        let valued = inst.max_value(j) > 0.0;
        if !p.is_finite() || p < 0.0 || (valued && p <= 0.0) {
            return Err(FppeError::Domain { good: j, price: p });
        }
    }
    Ok(())
}

/// Ties in the minimum ratio go to the lowest good index.
pub(crate) fn bidder_rates(inst: &MarketInstance, prices: &[f64]) -> Result<Vec<Rate>> {
    check_domain(inst, prices)?;
    Ok((0..inst.num_bidders())
        .map(|i| {
            let mut best = Rate { rate: 1.0, argmin: None };
            for (j, &v) in inst.values().row(i).iter().enumerate() {
                if v > 0.0 {
                    let ratio = prices[j] / v;
                    if ratio < best.rate {
                        best = Rate { rate: ratio, argmin: Some(j) };
                    }
                }
            }
            best
        })
        .collect())
}

pub fn dual_objective(inst: &MarketInstance, prices: &[f64]) -> Result<f64> {
    let rates = bidder_rates(inst, prices)?;
    let price_sum: f64 = prices.iter().sum();
    let log_term: f64 = rates.iter().zip(inst.budgets()).map(|(r, b)| b * r.rate.ln()).sum();
    Ok(price_sum - log_term)
}

/// A subgradient of [`dual_objective`]: component `j` is `1 - D_j / p_j`
/// where `D_j` sums the budgets of paced bidders whose cheapest good is `j`.
pub fn dual_subgradient(inst: &MarketInstance, prices: &[f64]) -> Result<Vec<f64>> {
    let rates = bidder_rates(inst, prices)?;
    let mut grad = vec![1.0; prices.len()];
    for (r, b) in rates.iter().zip(inst.budgets()) {
        if let Some(j) = r.argmin {
            grad[j] -= b / prices[j];
        }
    }
    Ok(grad)
}

/// Pacing multipliers are the dual rates, clamped to `[0, 1]`.
pub fn extract_multipliers(point: &DualPoint) -> Vec<f64> {
    point.rates.iter().map(|r| r.clamp(0.0, 1.0)).collect()
}

/// `p_j = max_i alpha_i v_ij`.
pub fn recompute_prices(inst: &MarketInstance, alpha: &[f64]) -> Vec<f64> {
    (0..inst.num_goods())
        .map(|j| {
            inst.values()
                .column(j)
                .zip(alpha)
                .map(|(v, a)| a * v)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Box that contains the dual optimum: prices never exceed the highest
/// value on a good, and every rate stays above a budget-derived floor.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PriceBox {
    pub fn for_instance(inst: &MarketInstance) -> Self {
        let min_budget = inst.budgets().iter().copied().fold(f64::INFINITY, f64::min);
        let total_value: f64 = inst.values().as_slice().iter().sum();
        let rate_floor = min_budget / (inst.total_budget() + total_value);
        let upper: Vec<f64> = (0..inst.num_goods()).map(|j| inst.max_value(j)).collect();
        let lower = upper
            .iter()
            .map(|&u| if u > 0.0 { (u * rate_floor).max(EPS_FLOOR).min(u) } else { 0.0 })
            .collect();
        Self { lower, upper }
    }

    pub fn project(&self, prices: &mut [f64]) {
        for ((p, lo), hi) in prices.iter_mut().zip(&self.lower).zip(&self.upper) {
            *p = p.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, prices: &[f64]) -> bool {
        prices
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((p, lo), hi)| p >= lo && p <= hi)
    }
}
