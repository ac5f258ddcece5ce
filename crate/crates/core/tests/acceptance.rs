//! One test per acceptance criterion at full scale. Each prints a PASS/FAIL line.

use std::io::Write;
use std::sync::OnceLock;

use travelers_core::harness::acceptance::{self, CriterionResult, Scale};
use travelers_core::harness::RunReport;

fn check(r: CriterionResult) {
    // Written straight to stderr so the line shows without --nocapture.
    let _ = writeln!(std::io::stderr(), "{}", r.line());
    assert!(r.passed, "{}", r.line());
}

fn fairness() -> &'static RunReport {
    static RUNS: OnceLock<RunReport> = OnceLock::new();
    RUNS.get_or_init(|| acceptance::fairness_runs(&Scale::full()).expect("fairness runs"))
}

#[test]
fn a1_singleton_plan_and_client_success() {
    check(acceptance::a1(&Scale::full()).unwrap());
}

#[test]
fn a2_eight_path_success() {
    check(acceptance::a2(&Scale::full()).unwrap());
}

#[test]
fn a3_corrupted_table_frequency() {
    check(acceptance::a3(&Scale::full()).unwrap());
}

#[test]
fn a4_fairness_under_timing_tactics() {
    check(acceptance::a4_from(fairness()));
}

#[test]
fn a5_delayed_timestamps_filtered() {
    check(acceptance::a5_from(fairness()));
}

#[test]
fn a6_leader_censorship_breaks_fairness() {
    check(acceptance::a6(&Scale::full()).unwrap());
}

#[test]
fn a7_chernoff_consistency() {
    check(acceptance::a7().unwrap());
}

#[test]
fn a8_complexity_scaling() {
    check(acceptance::a8().unwrap());
}

#[test]
fn a9_encryption_lead_time() {
    check(acceptance::a9(&Scale::full()).unwrap());
}
