mod common;

use common::fixture;
use fppe::par::Execution;
use fppe::statics::{
    run_monotonicity_suite, run_sensitivity_suite, run_shill_suite, shill_proofness_check, write_statics_csv,
    InstanceSource, Relation, SuiteReport, STATICS_CSV_HEADER,
};
use fppe::SolverConfig;

fn csv(report: &SuiteReport) -> Vec<u8> {
    let mut out = Vec::new();
    write_statics_csv(&report.records, &mut out).unwrap();
    out
}

#[test]
fn monotonicity_holds_on_a_small_run() {
    let report = run_monotonicity_suite(&InstanceSource::standard(3), 20, &SolverConfig::default(), Execution::Parallel)
        .unwrap();
    assert_eq!(report.failures(), 0);
    assert_eq!(report.pairs, 80);
    assert_eq!(report.skipped, 0);
}

#[test]
fn sensitivity_holds_on_a_small_run() {
    let report =
        run_sensitivity_suite(&InstanceSource::standard(3), 10, &[0.1, 1.0], &SolverConfig::default(), Execution::Parallel)
            .unwrap();
    assert_eq!(report.failures(), 0);
    assert!(report.records.iter().any(|r| r.relation == Relation::RevenueGainWithinDelta));
    assert!(report.records.iter().any(|r| r.relation == Relation::AlphaSandwich));
}

#[test]
fn shill_suite_holds_on_a_small_run() {
    let report = run_shill_suite(&InstanceSource::standard(3), 20, &SolverConfig::default(), Execution::Parallel).unwrap();
    assert_eq!(report.failures(), 0);
    assert_eq!(report.records.len() + report.skipped, 20);
}

#[test]
fn sequential_and_parallel_runs_are_identical() {
    let cfg = SolverConfig::default();
    let src = InstanceSource::standard(9);
    let seq = run_monotonicity_suite(&src, 12, &cfg, Execution::Sequential).unwrap();
    let par = run_monotonicity_suite(&src, 12, &cfg, Execution::Parallel).unwrap();
    assert_eq!(seq.records, par.records);
    assert_eq!(csv(&seq), csv(&par));
}

#[test]
fn csv_is_reproducible() {
    let cfg = SolverConfig::default();
    let src = InstanceSource::standard(5);
    let a = csv(&run_shill_suite(&src, 8, &cfg, Execution::Parallel).unwrap());
    let b = csv(&run_shill_suite(&src, 8, &cfg, Execution::Parallel).unwrap());
    assert_eq!(a, b);
    let header = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, STATICS_CSV_HEADER.join(","));
}

#[test]
fn empty_suite_writes_only_the_header() {
    let report =
        run_monotonicity_suite(&InstanceSource::standard(0), 0, &SolverConfig::default(), Execution::Parallel).unwrap();
    assert_eq!(String::from_utf8(csv(&report)).unwrap().lines().count(), 1);
}

#[test]
fn fake_bidder_cannot_raise_revenue_from_real_bidders() {
    // baseline revenue is 2; a weak fake bidder only competes the price down
    let inst = fixture("sw_bidder_pair.json");
    let rec = shill_proofness_check(&inst, &[0.1], 0.05, &SolverConfig::default()).unwrap().unwrap();
    assert!((rec.before.revenue - 2.0).abs() <= 1e-9);
    assert!(rec.after.revenue <= 2.0 + rec.tol);
    assert!(rec.holds);
}
