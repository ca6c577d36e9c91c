//! Runs every built-in verification suite and prints one line per check.

use mmali::oracles::{run, standard_assembler};

fn main() -> mmali::Result<()> {
    let results = run(&[], 0, standard_assembler)?;
    for r in &results {
        let status = if r.passed { "ok  " } else { "FAIL" };
        println!("{status} {:<14} {:<48} {:.2e} < {:.0e}", r.suite, r.name, r.value, r.tolerance);
    }
    Ok(())
}
