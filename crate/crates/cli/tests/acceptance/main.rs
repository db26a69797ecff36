//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so the
//! report prints in order and the socket watcher sees the whole run.

mod builders;
mod bm25;
mod dsl_fuzz;
mod examples;
mod fuzzy;
mod hermetic;
mod losses;
mod oracle;
mod plans;
mod sql;

use std::time::Instant;

type Outcome = Result<String, String>;

fn main() {
    let watcher = hermetic::SocketWatcher::start();
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("plan equivalence vs brute force", plans::plan_equivalence),
        ("greedy order and monotone queue keys", plans::greedy_trace),
        ("worked examples (a)-(e)", examples::worked_examples),
        ("chain round trip and parser totality", dsl_fuzz::round_trip_and_totality),
        ("SQL translation soundness", sql::translation_soundness),
        ("BM25 closed form and tf monotonicity", bm25::closed_form_and_monotone),
        ("loss closed forms", losses::closed_forms),
        ("training-file builders", builders::training_files),
        ("fuzzy match tiers", fuzzy::tiers),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        failed += report(i + 1, name, check);
    }
    let hermetic = || hermetic::end_to_end(&watcher);
    failed += report(10, "hermetic end-to-end ingest, run, eval", &hermetic);
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(n: usize, name: &str, check: &dyn Fn() -> Outcome) -> usize {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {n:>2} {name}: {detail} ({secs:.2}s)");
            0
        }
        Err(detail) => {
            println!("FAIL {n:>2} {name}: {detail} ({secs:.2}s)");
            1
        }
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

/// `Err` with a message unless `cond` holds.
fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
