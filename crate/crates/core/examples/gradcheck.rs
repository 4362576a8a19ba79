// Finite-difference gradient checks in double precision.
//
// Without arguments a few single-op checks run; `all` runs the whole suite
// including the full pyramid, and any other argument names one check.
//
// `cargo run --release --example gradcheck -- all`

use resfpn::gradcheck::{run_suite, CheckResult, DEFAULT_TOLERANCE};
use resfpn::pyramid::PyramidConfig;

fn report(results: &[CheckResult]) {
    for r in results {
        println!(
            "{:<16} {:>4} points  max rel err {:.3e}  tol {:.0e}  {}",
            r.name,
            r.points,
            r.max_rel_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
}

fn check(only: Option<&str>) -> resfpn::Result<bool> {
    let results = run_suite(&PyramidConfig::default(), DEFAULT_TOLERANCE, only, 0)?;
    report(&results);
    Ok(results.iter().all(CheckResult::passed))
}

pub fn run_example() -> resfpn::Result<()> {
    for name in ["conv3x3_stride2", "upconv", "maxpool4", "soft_argmin", "adjoint"] {
        assert!(check(Some(name))?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> resfpn::Result<()> {
    let ok = match std::env::args().nth(1).as_deref() {
        None => return run_example(),
        Some("all") => check(None)?,
        Some(name) => check(Some(name))?,
    };
    if !ok {
        std::process::exit(1);
    }
    Ok(())
}
