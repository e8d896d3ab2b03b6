//! Runs every acceptance criterion and prints one pass/fail line each.
//!
//! Built without the libtest harness so the lines reach the console under
//! plain `cargo test`.

use std::process::ExitCode;
use std::time::Instant;

use hhlab::cli::verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let start = Instant::now();
        let report = run_criterion(id, 0).expect("listed criterion");
        println!("{report} ({:.1}s)", start.elapsed().as_secs_f64());
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
