//! Acceptance suite: every criterion at its stated tolerance, one line each.
//!
//! Run with `cargo test -p addcoal --test acceptance --release`.

use std::io::Write;
use std::time::{Duration, Instant};

use addcoal::verify::run_criterion;

const SEED: u64 = 42;

/// Wall-clock budget per criterion, where one is stated.
fn budget(id: u32) -> Option<Duration> {
    let secs = match id {
        1 => 5,
        2 => 30,
        4 => 60,
        7 => 300,
        9 => 1,
        11 => 120,
        13 => 60,
        14 => 600,
        _ => return None,
    };
    Some(Duration::from_secs(secs))
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for id in 1..=14 {
        let start = Instant::now();
        let r = run_criterion(id, SEED);
        let elapsed = start.elapsed();
        let in_time = budget(id).is_none_or(|b| elapsed <= b);
        let passed = r.passed && in_time;
        let limit = budget(id).map_or(String::new(), |b| format!(", limit {}s", b.as_secs()));
        writeln!(
            err,
            "criterion {id:>2}: {} | {} | {} ({:.2}s{limit})",
            if passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail,
            elapsed.as_secs_f64()
        )
        .unwrap();
        if !passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
