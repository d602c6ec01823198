mod common;

use common::market;
use fppe::market::{generate_complete_graph, instance_from_json, instance_to_json, load_instance, save_instance};
use proptest::prelude::*;

proptest! {
    #[test]
    fn json_round_trip_is_exact(inst in market(6, 6)) {
        prop_assert_eq!(instance_from_json(&instance_to_json(&inst)).unwrap(), inst);
    }

    #[test]
    fn budgets_scale_linearly(n in 1usize..8, m in 1usize..12, seed in any::<u64>(), scale in 0.1f64..4.0) {
        let unit = generate_complete_graph(n, m, seed, 1.0).unwrap();
        let scaled = generate_complete_graph(n, m, seed, scale).unwrap();
        prop_assert_eq!(unit.values(), scaled.values());
        for (a, b) in unit.budgets().iter().zip(scaled.budgets()) {
            prop_assert!((a * scale - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn generated_values_in_open_unit_interval(n in 1usize..8, m in 1usize..12, seed in any::<u64>()) {
        let inst = generate_complete_graph(n, m, seed, 0.5).unwrap();
        prop_assert!(inst.values().as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        let cap = 0.5 * m as f64 / n as f64;
        prop_assert!(inst.budgets().iter().all(|&b| b > 0.0 && b < cap));
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let a = generate_complete_graph(4, 6, 7, 0.5).unwrap();
    assert_eq!(a, generate_complete_graph(4, 6, 7, 0.5).unwrap());
    assert_ne!(a, generate_complete_graph(4, 6, 8, 0.5).unwrap());
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let inst = generate_complete_graph(3, 5, 11, 0.5).unwrap();
    save_instance(&inst, &path).unwrap();
    assert_eq!(load_instance(&path).unwrap(), inst);
    let first = std::fs::read(&path).unwrap();
    save_instance(&inst, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn malformed_documents_are_rejected() {
    for text in [
        "{}",
        r#"{"values": [[1.0]], "budgets": []}"#,
        r#"{"values": [[1.0], [1.0, 2.0]], "budgets": [1.0, 1.0]}"#,
        r#"{"values": [[-1.0]], "budgets": [1.0]}"#,
        r#"{"values": [[1.0]], "budgets": [0.0]}"#,
    ] {
        assert!(instance_from_json(text).is_err(), "{text}");
    }
}

#[test]
fn invalid_generator_arguments() {
    assert!(generate_complete_graph(0, 3, 0, 0.5).is_err());
    assert!(generate_complete_graph(3, 0, 0, 0.5).is_err());
    assert!(generate_complete_graph(3, 3, 0, 0.0).is_err());
    assert!(generate_complete_graph(3, 3, 0, f64::NAN).is_err());
}
