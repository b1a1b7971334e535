//! Reporting helpers for the acceptance run.

use std::time::{Duration, Instant};

/// Result of one criterion: whether every sub-check held, plus a one-line
/// summary of the measured values.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    pub fn error(err: impl std::fmt::Display) -> Self {
        Outcome {
            pass: false,
            detail: format!("error: {err}"),
        }
    }
}

/// Collects the criterion lines and the overall verdict.
#[derive(Debug, Default)]
pub struct Ledger {
    lines: Vec<(usize, bool)>,
}

impl Ledger {
    pub fn new() -> Self {
        Ledger::default()
    }

    /// Runs `check`, adds the runtime limit to its verdict and prints the
    /// PASS/FAIL line.
    pub fn run(&mut self, id: usize, title: &str, limit: Duration, check: impl FnOnce() -> Outcome) -> bool {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = outcome.pass && in_time;
        println!(
            "{} criterion {id:>2} {title}: {} [{:.2} s of {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" },
        );
        self.lines.push((id, pass));
        pass
    }

    pub fn failed(&self) -> Vec<usize> {
        self.lines.iter().filter(|(_, p)| !p).map(|(id, _)| *id).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|(_, p)| *p)
    }
}
