//! Runs every acceptance criterion at full size and prints one line each.

use std::time::Instant;

use burgerlab_cli::checks::{run_check, CheckContext, CHECKS};

fn main() {
    let tmp = tempfile::tempdir().expect("scratch directory");
    let ctx = CheckContext::new(tmp.path().to_path_buf());
    let mut failed = Vec::new();
    for spec in &CHECKS {
        let start = Instant::now();
        let outcome = run_check(spec, &ctx);
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {:>2} {:<20} {:>7.1}s  {}",
            spec.id,
            spec.name,
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass {
            failed.push(spec.name);
        }
    }
    println!("{} of {} criteria passed", CHECKS.len() - failed.len(), CHECKS.len());
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
