//! Full acceptance run: every criterion at its pinned tolerance, one
//! PASS/FAIL line each. Takes several minutes on a single core.
//!
//! Runs without the libtest harness so the lines are never captured.

use std::process::ExitCode;

use gogrow_core::verify::{run_criteria, CheckResult, Criterion, VerifyOptions};

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    // The pushed-speed runs are shared with the histogram check.
    let groups: &[&[Criterion]] = &[
        &[Criterion::SigmaStar],
        &[Criterion::Oracles],
        &[Criterion::MassGrowth],
        &[Criterion::PdeFront],
        &[Criterion::FpPushed],
        &[Criterion::FpPulled],
        &[Criterion::Ancestry],
        &[Criterion::PushedSpeed, Criterion::Histogram],
        &[Criterion::PulledSpeed],
    ];
    let mut results: Vec<CheckResult> = Vec::new();
    for group in groups {
        for r in run_criteria(group, &opts) {
            println!("{}", r.line());
            results.push(r);
        }
    }
    assert_eq!(results.len(), Criterion::ALL.len());
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
