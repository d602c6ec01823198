//! Recovers a fractional allocation from pacing multipliers and prices.
//!
//! Money flows from each sold good (supply `p_j`) to its highest paced
//! bidders and on to the sink. Paced bidders must receive exactly their
//! budget, unpaced bidders at most their budget, and every sold good must
//! be paid for in full. Those lower bounds are removed with the usual
//! super-source / super-sink reduction so a plain max-flow decides
//! feasibility.

use crate::error::{FppeError, Result};
use crate::flow::{EdgeId, FlowNetwork};
use crate::market::{MarketInstance, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TieGraph {
    /// Near-highest bidders per good; empty for goods with zero price.
    pub winners: Vec<Vec<usize>>,
    pub paced: Vec<bool>,
    /// Money each sold good must collect (`p_j`, zero if unsold).
    pub supplies: Vec<f64>,
    /// Budget caps per bidder.
    pub capacities: Vec<f64>,
}

impl TieGraph {
    pub fn num_goods(&self) -> usize {
        self.winners.len()
    }

    pub fn num_bidders(&self) -> usize {
        self.paced.len()
    }

    /// Default feasibility tolerance: `1e-6` of the total budget.
    pub fn default_feasibility_tol(&self) -> f64 {
        1e-6 * self.capacities.iter().sum::<f64>()
    }
}

pub fn build_tie_graph(
    inst: &MarketInstance,
    alpha: &[f64],
    prices: &[f64],
    tie_epsilon: f64,
) -> Result<TieGraph> {
    let (n, m) = (inst.num_bidders(), inst.num_goods());
    if alpha.len() != n || prices.len() != m {
        return Err(FppeError::Dimension(format!(
            "{} multipliers and {} prices for a {n}x{m} instance",
            alpha.len(),
            prices.len()
        )));
    }
    let mut winners = vec![Vec::new(); m];
    for (j, w) in winners.iter_mut().enumerate() {
        let p = prices[j];
        if p <= 0.0 {
            continue;
        }
        for (i, &a) in alpha.iter().enumerate() {
            let bid = a * inst.value(i, j);
            if bid > p * (1.0 + tie_epsilon) {
                return Err(FppeError::InvalidArgument(format!(
                    "bid {bid} of bidder {i} exceeds price {p} of good {j}"
                )));
            }
            if bid >= (1.0 - tie_epsilon) * p {
                w.push(i);
            }
        }
        if w.is_empty() {
            return Err(FppeError::EmptyWinnerSet { good: j, price: p });
        }
    }
    Ok(TieGraph {
        winners,
        paced: alpha.iter().map(|&a| a < 1.0 - tie_epsilon).collect(),
        supplies: prices.iter().map(|&p| p.max(0.0)).collect(),
        capacities: inst.budgets().to_vec(),
    })
}

pub fn recover_allocation(tg: &TieGraph) -> Result<Matrix> {
    recover_allocation_with_tol(tg, tg.default_feasibility_tol())
}

pub fn recover_allocation_with_tol(tg: &TieGraph, feasibility_tol: f64) -> Result<Matrix> {
    let (n, m) = (tg.num_bidders(), tg.num_goods());
    let source = 0;
    let sink = 1;
    let good = |j: usize| 2 + j;
    let bidder = |i: usize| 2 + m + i;
    let super_source = 2 + m + n;
    let super_sink = super_source + 1;

    let mut net = FlowNetwork::new(super_sink + 1);
    let mut excess = vec![0.0; super_sink + 1];
    let mut money_edges: Vec<(usize, usize, EdgeId)> = Vec::new();

    for j in 0..m {
        let supply = tg.supplies[j];
        if supply <= 0.0 {
            continue;
        }
        // source -> good carries exactly the price
        excess[good(j)] += supply;
        excess[source] -= supply;
        for &i in &tg.winners[j] {
            let e = net.add_edge(good(j), bidder(i), supply);
            money_edges.push((i, j, e));
        }
    }
    for i in 0..n {
        let cap = tg.capacities[i];
        if tg.paced[i] {
            excess[sink] += cap;
            excess[bidder(i)] -= cap;
        } else {
            net.add_edge(bidder(i), sink, cap);
        }
    }
    net.add_edge(sink, source, f64::INFINITY);

    let mut demand = 0.0;
    for (v, &ex) in excess.iter().enumerate().take(super_source) {
        if ex > 0.0 {
            net.add_edge(super_source, v, ex);
            demand += ex;
        } else if ex < 0.0 {
            net.add_edge(v, super_sink, -ex);
        }
    }
    let pushed = net.max_flow(super_source, super_sink);
    let unmet = demand - pushed;
    if unmet > feasibility_tol {
        return Err(FppeError::InfeasibleFlow { unmet, tol: feasibility_tol });
    }

    let mut x = Matrix::zeros(n, m);
    for (i, j, e) in money_edges {
        x[(i, j)] = (net.flow(e) / tg.supplies[j]).clamp(0.0, 1.0);
    }
    Ok(x)
}

/// Builds the tie graph and recovers the allocation in one step.
pub fn allocate(inst: &MarketInstance, alpha: &[f64], prices: &[f64], tie_epsilon: f64) -> Result<Matrix> {
    let tg = build_tie_graph(inst, alpha, prices, tie_epsilon)?;
    recover_allocation(&tg)
}
