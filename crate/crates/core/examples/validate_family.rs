//! Sampling checks on intensity families: the disability model over ages
//! 25 to 67 and durations 0 to 5, and a hand-written family whose bound is
//! declared too small.

use smj::expr::{Expr, Factor, Term};
use smj::intensity::{
    lipschitz_audit, product_grid, validate, DisabilityFamily, ExpressionFamily, RateEntry,
};
use smj::quadrature::uniform_grid;

pub fn run_example() -> smj::Result<(usize, usize)> {
    let disability = DisabilityFamily::shipped();
    let grid = product_grid(&uniform_grid(25.0, 67.0, 42), &uniform_grid(0.0, 5.0, 50));
    let report = validate(&disability, &grid)?;
    println!(
        "disability: {} points, largest |diagonal| {:.4} <= gamma0 {}, {} violation(s)",
        report.points,
        report.inferred_bound,
        report.gamma0,
        report.violations.len()
    );
    let audit = lipschitz_audit(&disability, (25.0, 67.0), (0.0, 5.0), 20_000, 1)?;
    println!(
        "Lipschitz constant {}: largest observed ratio {:.4}, {} violation(s)",
        audit.constant, audit.max_ratio, audit.violations
    );

    // Gompertz mortality exp(-9 + 0.1 s) with gamma0 = 0.05: exceeded past s = 60.
    let rate = Expr(vec![Term {
        scale: 1.0,
        factors: vec![Factor::Exp {
            intercept: -9.0,
            s_coef: 0.1,
            v_coef: 0.0,
        }],
    }]);
    let gompertz = ExpressionFamily::new(2, vec![RateEntry { from: 0, to: 1, rate }], 0.05, None)?;
    let bad = validate(&gompertz, &product_grid(&uniform_grid(0.0, 100.0, 20), &[0.0]))?;
    for v in bad.violations.iter().take(3) {
        println!("  {v}");
    }
    println!("gompertz: {} violation(s)", bad.violations.len());
    Ok((report.violations.len(), bad.violations.len()))
}

fn main() -> smj::Result<()> {
    run_example()?;
    Ok(())
}
