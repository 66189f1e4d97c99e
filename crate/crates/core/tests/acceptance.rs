//! One PASS/FAIL line per acceptance criterion.
//!
//! Criterion 1 also checks that the 24 smallest sorted singular values agree;
//! three non-invariant values fall below the repeated cluster, so it fails.
//! Criterion 4 compares against `(2/L)·Σσ^{2/L}` as stated and is expected to
//! fail for `L = 3, 4`; the minimum is `(L/2)·Σσ^{2/L}`, which the `schatten`
//! verify suite also checks. This target reports but never panics on a failed
//! criterion; it panics only if a criterion errors out. It runs without the test
//! harness so the lines always reach stdout.

use std::time::Instant;

use lowrank_lab::runner::suites::CRITERIA;

const BUDGET_SECS: [f64; 11] = [60.0, 60.0, 30.0, 120.0, 120.0, 10.0, 5.0, 60.0, 60.0, 30.0, 300.0];

fn main() {
    let mut failed = Vec::new();
    for c in CRITERIA {
        let start = Instant::now();
        let checks = (c.run)().unwrap_or_else(|e| panic!("criterion {} errored: {e}", c.id));
        let secs = start.elapsed().as_secs_f64();
        let pass = checks.iter().all(|k| k.pass);
        println!(
            "{} criterion {:>2}: {} ({secs:.1} s, budget {:.0} s)",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            BUDGET_SECS[c.id - 1]
        );
        for k in checks.iter().filter(|k| !k.pass) {
            println!("     {} lhs={:.6e} rhs={:.6e} gap={:.3e} tol={:.1e}", k.check, k.lhs, k.rhs, k.gap, k.tolerance);
        }
        if !pass {
            failed.push(c.id);
        }
    }
    println!("failed criteria: {failed:?}");
}
