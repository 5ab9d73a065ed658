//! Path simulation by thinning: the empirical survival of the two-state
//! model at s = 1 against e^{-1}, and a look at a few paths of the
//! disability model.

use std::sync::Arc;

use smj::intensity::{ConstantFamily, DisabilityFamily, Shifted};
use smj::linalg::Mat;
use smj::monte_carlo::simulate_paths;

pub fn run_example(n_paths: usize) -> smj::Result<f64> {
    let family = ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]]))?;
    let paths = simulate_paths(&family, 1.0, 0, 0.0, n_paths, 3)?;
    let alive = paths.iter().filter(|p| p.state_at(1.0).0 == 0).count() as f64 / n_paths as f64;
    let se = (alive * (1.0 - alive) / n_paths as f64).sqrt();
    println!("survival {alive:.5} +- {se:.5}, exact {:.5}", (-1.0f64).exp());

    let disability = Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0);
    for p in simulate_paths(&disability, 5.0, 0, 0.0, 200, 5)?.iter().filter(|p| p.jumps() > 0).take(3) {
        let legs: Vec<String> = p
            .states
            .iter()
            .zip(&p.times)
            .map(|(j, t)| format!("{}@{t:.3}", j + 1))
            .collect();
        println!("{}", legs.join(" -> "));
    }
    Ok(alive)
}

fn main() -> smj::Result<()> {
    run_example(100_000)?;
    Ok(())
}
