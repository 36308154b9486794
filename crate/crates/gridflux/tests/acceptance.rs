//! Acceptance gate: every criterion runs at its pinned tolerance and prints
//! one pass/fail line. The same suite backs the `gridflux accept`
//! subcommand.

use gridflux::accept::run_all;

#[test]
fn acceptance_criteria() {
    let outcomes = run_all();
    assert_eq!(outcomes.len(), 10, "expected ten criteria");

    let mut failures = Vec::new();
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {:2}: {} — {}", o.id, o.name, o.detail);
        if !o.passed {
            failures.push(o.id);
        }
    }
    assert!(failures.is_empty(), "criteria failed: {failures:?}");
}
