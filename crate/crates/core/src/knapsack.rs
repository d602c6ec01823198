//! Budget-constrained demand at fixed unit costs.

/// Optimal bundle of a bidder who can buy any fraction of each good at
/// `costs[j]` per unit, subject to a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub utility: f64,
    pub spend: f64,
    pub fractions: Vec<f64>,
}

/// Fractional knapsack: maximize `sum x_j (v_j - c_j)` subject to
/// `sum x_j c_j <= budget`, `x in [0, 1]^m`.
///
/// Goods with `v_j <= c_j` are skipped. Free goods (`c_j = 0`, `v_j > 0`)
/// are taken in full; the rest are filled greedily by `(v_j - c_j) / c_j`,
/// lowest index first on equal ratios, with the last good fractional.
pub fn fractional_knapsack(values: &[f64], costs: &[f64], budget: f64) -> Bundle {
    let m = values.len();
    let mut fractions = vec![0.0; m];
    let mut utility = 0.0;
    let mut spend = 0.0;
    let mut paid: Vec<usize> = Vec::new();
    for j in 0..m {
        let (v, c) = (values[j], costs[j]);
        if v <= c {
            continue;
        }
        if c <= 0.0 {
            fractions[j] = 1.0;
            utility += v;
        } else {
            paid.push(j);
        }
    }
    let ratio = |j: usize| (values[j] - costs[j]) / costs[j];
    paid.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let mut left = budget.max(0.0);
    for j in paid {
        if left <= 0.0 {
            break;
        }
        let c = costs[j];
        let x = (left / c).min(1.0);
        fractions[j] = x;
        utility += x * (values[j] - c);
        spend += x * c;
        left -= x * c;
    }
    Bundle { utility, spend, fractions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_goods_taken_fully() {
        let b = fractional_knapsack(&[10.0, 5.0], &[0.0, 5.0], 10.0);
        assert_eq!(b.utility, 10.0);
        assert_eq!(b.fractions, vec![1.0, 0.0]);
    }

    #[test]
    fn budget_binds_on_last_good() {
        let b = fractional_knapsack(&[10.0], &[2.0], 1.0);
        assert!((b.fractions[0] - 0.5).abs() < 1e-15);
        assert!((b.utility - 4.0).abs() < 1e-15);
        assert!((b.spend - 1.0).abs() < 1e-15);
    }

    #[test]
    fn greedy_order_by_ratio() {
        // ratios: 1.0, 3.0, 0.5
        let b = fractional_knapsack(&[2.0, 4.0, 3.0], &[1.0, 1.0, 2.0], 1.5);
        assert_eq!(b.fractions[1], 1.0);
        assert!((b.fractions[0] - 0.5).abs() < 1e-15);
        assert_eq!(b.fractions[2], 0.0);
        assert!((b.utility - 3.5).abs() < 1e-15);
    }

    #[test]
    fn nothing_worth_buying() {
        let b = fractional_knapsack(&[1.0, 2.0], &[1.0, 3.0], 5.0);
        assert_eq!(b.utility, 0.0);
        assert_eq!(b.spend, 0.0);
    }
}
