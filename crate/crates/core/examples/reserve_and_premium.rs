//! Term insurance on the two-state model: unit benefit on death, level
//! premium while alive, 5% interest. The fair premium rate equals the
//! death intensity.

use std::sync::Arc;

use smj::intensity::{ConstantFamily, FamilyRef};
use smj::linalg::Mat;
use smj::pi::Mode;
use smj::valuation::{premium_solve, reserve_at, DiscountCurve, EngineSettings, PaymentSpec};

pub fn run_example() -> smj::Result<(f64, f64)> {
    let mu = 0.3;
    let family: FamilyRef = Arc::new(ConstantFamily::new(Mat::from_rows(&[
        vec![-mu, mu],
        vec![0.0, 0.0],
    ]))?);
    let horizon = 10.0;
    let benefits = PaymentSpec::new(2, horizon).with_lump(|j, _, k, _| if j == 0 && k == 1 { 1.0 } else { 0.0 });
    let premiums = PaymentSpec::new(2, horizon).with_rate(|j, _, _| if j == 0 { -1.0 } else { 0.0 });
    let discount = DiscountCurve::Constant(0.05);
    let mut settings = EngineSettings::new(30.0, Mode::Unconditional, 0);
    settings.n_s = 100;

    let v = reserve_at(&family, &benefits, &discount, 0.0, 0, 0.0, &settings)?;
    let exact = mu / (mu + 0.05) * (1.0 - (-(mu + 0.05) * horizon).exp());
    println!("benefit value {v:.10} (exact {exact:.10})");

    let c = premium_solve(&benefits, &premiums, |spec| {
        reserve_at(&family, spec, &discount, 0.0, 0, 0.0, &settings)
    })?;
    println!("fair premium rate {c:.10} (death intensity {mu})");

    let v5 = reserve_at(&family, &benefits.affine(&premiums, c)?, &discount, 5.0, 0, 5.0, &settings)?;
    println!("reserve at t = 5 for the fair contract {v5:.3e}");
    Ok((v, c))
}

fn main() -> smj::Result<()> {
    run_example()?;
    Ok(())
}
