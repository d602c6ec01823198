#![allow(dead_code)]

use std::path::PathBuf;

use fppe::market::load_instance;
use fppe::MarketInstance;
use proptest::prelude::*;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> MarketInstance {
    load_instance(fixture_path(name)).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Small markets with a mix of zero and positive values.
pub fn market(max_bidders: usize, max_goods: usize) -> impl Strategy<Value = MarketInstance> {
    (1..=max_bidders, 1..=max_goods)
        .prop_flat_map(|(n, m)| {
            let value = prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0];
            (
                proptest::collection::vec(proptest::collection::vec(value, m), n),
                proptest::collection::vec(0.01f64..2.0, n),
            )
        })
        .prop_map(|(rows, budgets)| MarketInstance::from_rows(&rows, &budgets).unwrap())
}
