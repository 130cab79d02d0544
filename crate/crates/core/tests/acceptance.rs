//! Acceptance criteria 1–8, one PASS/FAIL line each.
//!
//! Lines go straight to the process stdout so they show up without
//! `--nocapture`.

use std::io::Write;

use cqed_synth::bench::{registry, run_scenario, BenchContext, CRITERIA};

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance_criteria() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut ctx = BenchContext::new(1);
    let mut failed = Vec::new();
    for criterion in CRITERIA {
        let scenario = registry().iter().find(|s| s.criterion == criterion).expect("registered");
        let outcome = run_scenario(scenario.name, &mut ctx).expect("scenario runs");
        say(&format!("acceptance {}", outcome.line()));
        if outcome.over_budget() {
            say(&format!(
                "  note: {} exceeded its {:.0} s budget",
                scenario.name,
                scenario.budget.as_secs_f64()
            ));
        }
        if !outcome.passed {
            failed.push(scenario.name);
        }
    }
    assert!(failed.is_empty(), "failed scenarios: {failed:?}");
}
