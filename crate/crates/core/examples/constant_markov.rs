//! Two-state Markov model with constant intensities. The uniformized
//! transition measure at s = 1 is compared with the exact 1 - e^{-1}.

use smj::intensity::ConstantFamily;
use smj::kernel::Kernel;
use smj::linalg::Mat;
use smj::pi::Mode;

pub fn run_example() -> smj::Result<Vec<(f64, f64)>> {
    let family = ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]]))?;
    let exact = 1.0 - (-1.0f64).exp();
    let mut errors = Vec::new();
    for gamma in [10.0, 30.0, 100.0] {
        let kernel = Kernel::build(&family, gamma, Mode::Unconditional, None, 1.0, 1e-10)?;
        let row = kernel.row(1.0, 0, &[], false)?;
        let p12 = row.integrated[1];
        println!(
            "gamma {gamma:>5}: levels {:>4}  p12(1) = {p12:.12}  error {:+.3e}  stay {:.12}",
            kernel.max_level(),
            p12 - exact,
            row.atom
        );
        errors.push((gamma, p12 - exact));
    }
    Ok(errors)
}

fn main() -> smj::Result<()> {
    run_example()?;
    Ok(())
}
