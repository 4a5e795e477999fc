use std::io::Write;

use was_core::attention::ThresholdComparison;
use was_core::encoder::{gradcheck_suite, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
use was_core::oracle::Battery;

use crate::args::{GradcheckArgs, OracleArgs};
use crate::error::CliError;

pub fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let reports = gradcheck_suite(args.seed, args.corrupt_gradient)?;
    let _ = writeln!(out, "central differences, step {GRADCHECK_STEP:e}, seed {}", args.seed);
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    for (name, report) in &reports {
        let _ = writeln!(out, "model {name}: loss {:.6}, {} suppressed entries", report.loss, report.suppressed);
        for g in &report.groups {
            let _ = writeln!(out, "  {:<22} {:.3e}", g.name, g.relative_error);
        }
        worst = worst.max(report.max_relative_error());
        if !report.passed(GRADCHECK_TOLERANCE) {
            failing.push(*name);
        }
    }
    let _ = writeln!(out, "max relative error {worst:.3e} (limit {GRADCHECK_TOLERANCE:e})");
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "gradient check failed for {} (seed {})",
            failing.join(", "),
            args.seed
        )))
    }
}

pub fn oracle_check(args: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.rows == 0 {
        eprintln!("warning: --rows 0 checks nothing; every property passes vacuously");
    }
    let battery = Battery {
        seed: args.seed,
        rows: args.rows,
        comparison: if args.inject_fault {
            ThresholdComparison::NonStrict
        } else {
            ThresholdComparison::Strict
        },
    };
    let mut failures = Vec::new();
    for report in battery.run() {
        let status = if report.passed() { "ok  " } else { "FAIL" };
        let _ = writeln!(
            out,
            "{status} {:<26} cases {:>6}  failures {:>5}  boundary {:>3}  max |diff| {:.2e}  seed {}",
            report.name, report.cases, report.failures, report.boundary_cases, report.max_abs_diff, args.seed
        );
        if let Some(first) = &report.first_failure {
            let _ = writeln!(out, "     first failure: {first}");
            failures.push(format!("{}: {first}", report.name));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} properties failed with seed {}:\n  {}",
            failures.len(),
            args.seed,
            failures.join("\n  ")
        )))
    }
}
