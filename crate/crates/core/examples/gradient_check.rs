//! Finite-difference checks of every differentiable op and the composite
//! training loss.
//!
//! ```text
//! cargo run --example gradient_check -- conv2d
//! ```

use afnn::gradsuite::run_suite;

fn main() -> afnn::Result<()> {
    let only = std::env::args().nth(1);
    let results = run_suite(only.as_deref(), 10, 0)?;
    for r in &results {
        println!(
            "{} {:<16} max rel err {:.2e} (tol {:.0e}, {} entries)",
            if r.passed() { "ok  " } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.tol,
            r.entries_checked
        );
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        eprintln!("{failed} op(s) failed");
        std::process::exit(1);
    }
    Ok(())
}
