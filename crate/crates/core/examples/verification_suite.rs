//! Runs the verification suite and prints one line per check.
//!
//! Usage: `cargo run --release --example verification_suite -- [check id or group]`

use ancientflow::verify::{run_verification, VerifyOptions};
use std::time::Instant;

fn main() {
    let filter = std::env::args().nth(1);
    let opts = VerifyOptions {
        filter,
        ..Default::default()
    };
    let clock = Instant::now();
    let report = run_verification(&opts);
    for c in &report.checks {
        println!("{} [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name, c.details);
    }
    println!("{} in {:.1?}", if report.pass { "all passed" } else { "FAILURES" }, clock.elapsed());
}
