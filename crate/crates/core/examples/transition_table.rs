//! Transition measure of the disability model from age 40, written as CSV
//! to stdout: density rows for v < s and an atom row per (i, j).

use std::sync::Arc;

use smj::intensity::{DisabilityFamily, Shifted};
use smj::kernel::{default_v_grid, write_transition_csv, Kernel, TRANSITION_HEADER};
use smj::pi::Mode;

pub fn run_example() -> smj::Result<String> {
    let family = Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0);
    let gamma = 30.0;
    let kernel = Kernel::build(&family, gamma, Mode::Unconditional, None, 2.0, 1e-10)?;
    let measure = kernel.transition_measure(2.0, &default_v_grid(2.0, 10))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRANSITION_HEADER)?;
    write_transition_csv(&mut w, &measure, Mode::Unconditional, gamma, None)?;
    let bytes = w.into_inner().map_err(|e| smj::Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn main() -> smj::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
