use std::time::Instant;

use tagasc::gradsuite::{run_suite, Scope, GRAD_EPS, GRAD_TOL};

use crate::args::GradcheckArgs;
use crate::{CliError, CliResult};

pub fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let scopes = a
        .scope
        .iter()
        .map(|s| s.parse::<Scope>())
        .collect::<Result<Vec<_>, _>>()?;
    println!("eps {GRAD_EPS:e}, tolerance {GRAD_TOL:e}");
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut total = 0;
    for scope in scopes {
        let report = run_suite(scope, a.corrupt.as_deref())?;
        for c in &report.cases {
            total += 1;
            println!(
                "{:<9} {:<28} max rel err {:.3e}  worst input {} coord {}  {}",
                scope.to_string(),
                c.name,
                c.max_rel_error,
                c.worst.0,
                c.worst.1,
                if c.passed() { "ok" } else { "FAIL" }
            );
            if !c.passed() {
                failed.push(c.name.clone());
            }
        }
    }
    println!("{total} cases in {:.2}s", start.elapsed().as_secs_f64());
    if failed.is_empty() {
        println!("gradcheck: pass");
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient mismatch in {}",
            failed.join(", ")
        )))
    }
}
