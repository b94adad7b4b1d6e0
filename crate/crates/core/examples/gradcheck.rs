//! Finite-difference check of every differentiable op on the tape.
//!
//! cargo run --release --example gradcheck

use pipeline_distill::tensor::gradcheck::{check_all_ops, TOLERANCE};

fn main() -> pipeline_distill::Result<()> {
    let checks = check_all_ops(0)?;
    for c in &checks {
        println!(
            "{:<18} {:>4} inputs  max rel error {:.2e}  {}",
            c.op,
            c.checked,
            c.max_error,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("tolerance {TOLERANCE:.0e}; {failed} failed");
    Ok(())
}
