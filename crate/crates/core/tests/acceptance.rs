//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::process::ExitCode;

fn main() -> ExitCode {
    let mut failed = 0;
    for (i, (name, check)) in common::CRITERIA.iter().enumerate() {
        match check() {
            Ok(()) => println!("PASS {} {name}", i + 1),
            Err(why) => {
                println!("FAIL {} {name}: {why}", i + 1);
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
