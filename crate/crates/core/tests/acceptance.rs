//! The acceptance gate as an integration suite: one test per criterion,
//! each printing its pass/fail line and every check it made.

use dispersal_core::acceptance::{self, AcceptanceConfig, CriterionReport};
use dispersal_core::Result;

const CFG: AcceptanceConfig = AcceptanceConfig {
    fast: false,
    seed: 0,
};

fn run(outcome: Result<CriterionReport>) {
    let report = outcome.expect("criterion ran to completion");
    println!(
        "criterion {:2} [{}] {:6.2}s: {}",
        report.id,
        if report.passed { "PASS" } else { "FAIL" },
        report.seconds,
        report.name
    );
    for check in &report.checks {
        println!(
            "    [{}] {} {}",
            if check.passed { "ok " } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    assert!(report.passed, "criterion {} failed", report.id);
}

#[test]
fn criterion_01_operator_fidelity() {
    run(acceptance::criterion_1(CFG));
}

#[test]
fn criterion_02_scaling_law() {
    run(acceptance::criterion_2(CFG));
}

#[test]
fn criterion_03_steady_state_suite() {
    run(acceptance::criterion_3(CFG));
}

#[test]
fn criterion_04_linearization_identities() {
    run(acceptance::criterion_4(CFG));
}

#[test]
fn criterion_05_branching_machinery() {
    run(acceptance::criterion_5(CFG));
}

#[test]
fn criterion_06_instability_via_rescaling() {
    run(acceptance::criterion_6(CFG));
}

#[test]
fn criterion_07_instability_via_branching() {
    run(acceptance::criterion_7(CFG));
}

#[test]
fn criterion_08_dynamics() {
    run(acceptance::criterion_8(CFG));
}

#[test]
fn criterion_09_purely_nonlocal_phenomenon() {
    run(acceptance::criterion_9(CFG));
}

#[test]
fn criterion_10_full_run_budget_and_determinism() {
    let outcome = acceptance::run_all(CFG).expect("full suite ran");
    for report in &outcome.criteria {
        println!(
            "criterion {:2} [{}] {:6.2}s: {}",
            report.id,
            if report.passed { "PASS" } else { "FAIL" },
            report.seconds,
            report.name
        );
    }
    println!("total: {:.2}s", outcome.total_seconds);
    let last = outcome.criteria.last().expect("ten criteria");
    assert_eq!(last.id, 10);
    assert!(last.passed, "criterion 10 failed");
    assert!(outcome.all_passed, "some criterion failed in the full run");
    assert!(
        outcome.total_seconds < 1200.0,
        "full run took {:.1}s",
        outcome.total_seconds
    );
}
