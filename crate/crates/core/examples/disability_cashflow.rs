//! Expected cashflow for a disabled life aged 40: annuity e^{-s/5}/100 on
//! [1, 4] while disabled plus unit lumps on disablement and death. The
//! uniformization engine at gamma = 30 is set against Monte Carlo.

use std::sync::Arc;

use smj::intensity::{DisabilityFamily, FamilyRef, Shifted, ACTIVE, DEAD, DISABLED};
use smj::monte_carlo::{mc_cashflow, z_score};
use smj::pi::Mode;
use smj::valuation::{cashflow, EngineSettings, PaymentSpec};

pub fn payments() -> PaymentSpec {
    PaymentSpec::new(3, 5.0)
        .with_rate(|j, _v, s| {
            if j == DISABLED && (1.0..=4.0).contains(&s) {
                (-s / 5.0).exp() / 100.0
            } else {
                0.0
            }
        })
        .with_lump(|j, _v, k, _s| match (j, k) {
            (ACTIVE, DISABLED) | (ACTIVE, DEAD) | (DISABLED, DEAD) => 1.0,
            _ => 0.0,
        })
}

pub fn run_example(n_paths: usize) -> smj::Result<(Vec<f64>, Vec<f64>)> {
    let family: FamilyRef = Arc::new(Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0));
    let pay = payments();
    let mut settings = EngineSettings::new(30.0, Mode::Unconditional, 0);
    settings.n_s = 25;
    let kernel = settings.kernel(family.as_ref(), 5.0)?;
    let grid = settings.s_grid(5.0);
    let engine = cashflow(&kernel, &pay, DISABLED, &grid, settings.n_v)?;
    let mc = mc_cashflow(family.as_ref(), &pay, DISABLED, 0.0, n_paths, &grid, 11)?;
    println!("{:>6} {:>12} {:>12} {:>10} {:>7}", "s", "engine", "mc", "se", "z");
    let mut z = Vec::new();
    for a in 0..grid.len() {
        let za = z_score(engine.values[a], mc.mean[a], mc.se[a]);
        println!(
            "{:>6.2} {:>12.6} {:>12.6} {:>10.6} {:>7.2}",
            grid[a], engine.values[a], mc.mean[a], mc.se[a], za
        );
        z.push(za);
    }
    Ok((engine.values, z))
}

fn main() -> smj::Result<()> {
    run_example(50_000)?;
    Ok(())
}
