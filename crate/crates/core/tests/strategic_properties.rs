mod common;

use common::market;
use fppe::par::Execution;
use fppe::strategic::{
    best_response_bids, best_response_multiplier, misreport_grid, regret_record, relative_regret, reserve_prices,
    run_regret_grid, standard_lambdas, RegretGrid, ALPHA_FLOOR, REGRET_CAP,
};
use fppe::{solve_dual, SolverConfig};
use proptest::prelude::*;

const TOL: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn best_responses_dominate_equilibrium(inst in market(4, 5)) {
        let sol = solve_dual(&inst, &SolverConfig::default()).unwrap();
        prop_assert!(sol.converged());
        let o = &sol.outcome;
        for i in 0..inst.num_bidders() {
            let r = regret_record(&inst, o, i).unwrap();
            let tol = TOL * (1.0 + r.eq_utility);
            prop_assert!(r.br_utility_bids >= r.eq_utility - tol);
            prop_assert!(r.br_utility_bids >= r.br_utility_multiplier - tol);
            prop_assert!(r.br_utility_multiplier >= r.eq_utility);
            prop_assert!(r.relative_regret_bids >= -TOL && r.relative_regret_multiplier >= -TOL);
            prop_assert!(r.relative_regret_bids <= REGRET_CAP && r.relative_regret_multiplier <= REGRET_CAP);

            let (a, u) = best_response_multiplier(&inst, o, i);
            prop_assert!(a == 0.0 || (ALPHA_FLOOR..=1.0).contains(&a));
            prop_assert!(u <= best_response_bids(&inst, o, i) + tol);
        }
    }

    #[test]
    fn reserves_ignore_own_bid(inst in market(4, 5)) {
        let sol = solve_dual(&inst, &SolverConfig::default()).unwrap();
        let o = &sol.outcome;
        for i in 0..inst.num_bidders() {
            let r = reserve_prices(&inst, o, i);
            for (j, &rj) in r.iter().enumerate() {
                let others = (0..inst.num_bidders())
                    .filter(|&k| k != i)
                    .map(|k| o.alpha[k] * inst.value(k, j))
                    .fold(0.0, f64::max);
                prop_assert_eq!(rj, others);
                prop_assert!(rj <= o.prices[j]);
            }
        }
    }

    #[test]
    fn regret_is_capped(eq in 0.0f64..1.0, gain in 0.0f64..100.0) {
        let r = relative_regret(eq, eq + gain);
        prop_assert!(r.value <= REGRET_CAP);
        prop_assert_eq!(r.capped, r.value == REGRET_CAP && gain / eq.max(1e-9) > REGRET_CAP);
    }
}

#[test]
fn lone_bidder_regrets_paying_its_budget() {
    // a single bidder faces zero reserves and can take everything for free
    let inst = common::fixture("sw_bidder_single.json");
    let sol = solve_dual(&inst, &SolverConfig::default()).unwrap();
    let r = regret_record(&inst, &sol.outcome, 0).unwrap();
    assert!((r.br_utility_bids - 10.0).abs() <= 1e-9);
    // equilibrium utility is 10 - 1 = 9
    assert!((r.relative_regret_bids - 1.0 / 9.0).abs() <= 1e-9);
}

#[test]
fn truthful_report_has_zero_gain() {
    let inst = fppe::market::generate_complete_graph(3, 6, 4, 0.5).unwrap();
    let lambdas = standard_lambdas();
    assert_eq!(lambdas.len(), 11);
    for i in 0..3 {
        let report = misreport_grid(&inst, i, &lambdas, &SolverConfig::default(), Execution::Parallel).unwrap();
        let truthful = report
            .cells
            .iter()
            .find(|c| (c.lambda_v - 1.0).abs() < 1e-12 && (c.lambda_b - 1.0).abs() < 1e-12)
            .unwrap();
        assert!(truthful.converged);
        assert!(truthful.gain.abs() <= 1e-6);
        assert_eq!(report.cells.len(), 121);
    }
}

#[test]
fn regret_grid_shape_and_determinism() {
    let grid = RegretGrid { bidders: vec![2, 3], goods: vec![4, 5], seeds: 2, base_seed: 1, budget_scale: 0.5 };
    let cfg = SolverConfig::default();
    let seq = run_regret_grid(&grid, &cfg, Execution::Sequential).unwrap();
    let par = run_regret_grid(&grid, &cfg, Execution::Parallel).unwrap();
    assert_eq!(seq.rows, par.rows);
    assert_eq!(seq.skipped, 0);
    assert_eq!(seq.rows.len(), (2 + 3) * 2 * 2);
}
