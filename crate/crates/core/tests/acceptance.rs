//! Runs every acceptance criterion and prints one `[PASS]`/`[FAIL]` line per
//! criterion with the measured values. Exits non-zero if any criterion fails.

use std::process::ExitCode;

use ddf_core::verify;

fn main() -> ExitCode {
    let mut failed = 0;
    for suite in verify::SUITES {
        for outcome in verify::run_suite(suite, None) {
            println!("{outcome}");
            failed += usize::from(!outcome.passed);
        }
    }
    println!("acceptance: {} of {} criteria failed", failed, verify::SUITES.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
