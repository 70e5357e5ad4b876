use std::process::ExitCode;
use std::time::Instant;

use gelfand_core::golden::{run_one, CRITERIA};

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failed = 0;
    for &(id, title, f) in CRITERIA.iter() {
        let t = Instant::now();
        let c = run_one(id, title, f);
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status}  {title}  [{:.1}s]", t.elapsed().as_secs_f64());
        println!("             {}", c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        CRITERIA.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
