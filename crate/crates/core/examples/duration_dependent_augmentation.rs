//! Duration-dependent annuity 1{v >= 0.1} e^{-(s-v)/5}/100 for a disabled
//! life, starting fresh (u = 0) or one year into disability (u = 1). The
//! second start goes through the augmented family, which keeps the
//! duration clock running until the first jump.

use std::sync::Arc;

use smj::intensity::{DisabilityFamily, FamilyRef, Shifted, ACTIVE, DEAD, DISABLED};
use smj::pi::Mode;
use smj::valuation::{cashflow_at_start, EngineSettings, PaymentSpec};

pub fn payments() -> PaymentSpec {
    PaymentSpec::new(3, 5.0)
        .with_rate(|j, v, s| {
            if j == DISABLED && v >= 0.1 && (1.0..=4.0).contains(&s) {
                (-(s - v) / 5.0).exp() / 100.0
            } else {
                0.0
            }
        })
        .with_lump(|j, _v, k, _s| match (j, k) {
            (ACTIVE, DISABLED) | (ACTIVE, DEAD) | (DISABLED, DEAD) => 1.0,
            _ => 0.0,
        })
        .duration_independent(false)
}

pub fn run_example(gamma: f64) -> smj::Result<(Vec<f64>, Vec<f64>)> {
    let family: FamilyRef = Arc::new(Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0));
    let pay = payments();
    let mut settings = EngineSettings::new(gamma, Mode::Unconditional, 0);
    settings.n_s = 20;
    settings.n_v = 50;
    let fresh = cashflow_at_start(&family, &pay, 0.0, DISABLED, 0.0, &settings)?;
    let later = cashflow_at_start(&family, &pay, 0.0, DISABLED, 1.0, &settings)?;
    println!("{:>6} {:>12} {:>12}", "s", "u = 0", "u = 1");
    for a in 0..fresh.s_grid.len() {
        println!("{:>6.2} {:>12.6} {:>12.6}", fresh.s_grid[a], fresh.values[a], later.values[a]);
    }
    Ok((fresh.values, later.values))
}

fn main() -> smj::Result<()> {
    run_example(30.0)?;
    Ok(())
}
