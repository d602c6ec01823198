//! Active-set refinement of an approximate dual point.
//!
//! Near the optimum the approximate multipliers reveal which bids are tied.
//! Inside one connected group of tied bidders the multiplier ratios are
//! fixed by the tied values, so the whole group moves with a single scalar.
//! That scalar is pinned either by the group's pooled budget (everyone
//! paced) or by its strongest member reaching a multiplier of one. The
//! result is an exact candidate that the equilibrium checks then accept or
//! reject.

use crate::market::MarketInstance;

use super::{bidder_rates, recompute_prices};

/// Relative tie tolerances tried when grouping bidders, loosest first.
pub(crate) const TIE_LADDER: [f64; 9] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-10];

/// Candidate multiplier vectors derived from the approximate `prices`,
/// one per tie tolerance, with duplicates removed.
pub fn polish_candidates(inst: &MarketInstance, prices: &[f64]) -> Vec<Vec<f64>> {
    let Ok(rates) = bidder_rates(inst, prices) else {
        return Vec::new();
    };
    let approx: Vec<f64> = rates.iter().map(|r| r.rate.clamp(0.0, 1.0)).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for tau in TIE_LADDER {
        let cand = group_multipliers(inst, &approx, tau);
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// Exact multipliers for the tie structure of `approx` at tolerance `tau`.
pub(crate) fn group_multipliers(inst: &MarketInstance, approx: &[f64], tau: f64) -> Vec<f64> {
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    let prices = recompute_prices(inst, approx);
    let mut winners: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut wins: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..m {
        if prices[j] <= 0.0 {
            continue;
        }
        for i in 0..n {
            let v = inst.value(i, j);
            if v > 0.0 && approx[i] * v >= (1.0 - tau) * prices[j] {
                winners[j].push(i);
                wins[i].push(j);
            }
        }
    }

    let mut alpha = vec![1.0; n];
    let mut coef = vec![0.0; n];
    let mut seen_bidder = vec![false; n];
    let mut seen_good = vec![false; m];
    for root in 0..n {
        if seen_bidder[root] || wins[root].is_empty() {
            continue;
        }
        // walk the tie component, expressing every multiplier relative to
        // the root's
        let mut members = vec![root];
        let mut goods_price = 0.0;
        seen_bidder[root] = true;
        coef[root] = 1.0;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for &j in &wins[i] {
                if seen_good[j] {
                    continue;
                }
                seen_good[j] = true;
                let price_coef = coef[i] * inst.value(i, j);
                goods_price += price_coef;
                for &k in &winners[j] {
                    if !seen_bidder[k] {
                        seen_bidder[k] = true;
                        coef[k] = price_coef / inst.value(k, j);
                        members.push(k);
                    }
                }
            }
        }
        let pooled: f64 = members.iter().map(|&i| inst.budget(i)).sum();
        let strongest = members.iter().map(|&i| coef[i]).fold(0.0, f64::max);
        let scale = (pooled / goods_price).min(1.0 / strongest);
        for &i in &members {
            let a = (scale * coef[i]).clamp(0.0, 1.0);
            alpha[i] = if a > 1.0 - 1e-12 { 1.0 } else { a };
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tie_group_from_rough_point() {
        // sw-bidder pair: true multipliers (0.2, 1) at price 2
        let inst = MarketInstance::from_rows(&[vec![10.0], vec![2.0]], &[1.0, 1.0]).unwrap();
        let alpha = group_multipliers(&inst, &[0.199, 1.0], 1e-2);
        assert!((alpha[0] - 0.2).abs() < 1e-15);
        assert_eq!(alpha[1], 1.0);
    }

    #[test]
    fn pooled_budget_pins_paced_group() {
        // one bidder, value 10, budget 1: multiplier is B / v
        let inst = MarketInstance::from_rows(&[vec![10.0]], &[1.0]).unwrap();
        let alpha = group_multipliers(&inst, &[0.3], 1e-3);
        assert!((alpha[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn candidates_are_distinct() {
        let inst = MarketInstance::from_rows(&[vec![10.0, 5.0], vec![0.0, 5.0]], &[10.0, 5.0]).unwrap();
        let c = polish_candidates(&inst, &[10.0, 5.0]);
        assert!(!c.is_empty());
        for (a, b) in c.iter().zip(c.iter().skip(1)) {
            assert_ne!(a, b);
        }
        assert_eq!(c[0], vec![1.0, 1.0]);
    }
}
