//! Runs every example through its `run_example` entry point.

#[allow(dead_code)]
#[path = "../examples/constant_markov.rs"]
mod constant_markov;
#[allow(dead_code)]
#[path = "../examples/transition_table.rs"]
mod transition_table;
#[allow(dead_code)]
#[path = "../examples/disability_cashflow.rs"]
mod disability_cashflow;
#[allow(dead_code)]
#[path = "../examples/duration_dependent_augmentation.rs"]
mod duration_dependent_augmentation;
#[allow(dead_code)]
#[path = "../examples/reserve_and_premium.rs"]
mod reserve_and_premium;
#[allow(dead_code)]
#[path = "../examples/monte_carlo_oracle.rs"]
mod monte_carlo_oracle;
#[allow(dead_code)]
#[path = "../examples/convergence_diagnostics.rs"]
mod convergence_diagnostics;
#[allow(dead_code)]
#[path = "../examples/validate_family.rs"]
mod validate_family;

#[test]
fn constant_markov_hits_closed_form() {
    for (gamma, err) in constant_markov::run_example().unwrap() {
        assert!(err.abs() < 1e-9, "gamma {gamma}: {err}");
    }
}

#[test]
fn transition_table_row_count() {
    let csv = transition_table::run_example().unwrap();
    // 9 (i, j) pairs, 10 density rows and one atom row each
    assert_eq!(csv.lines().count(), 1 + 9 * 11);
}

#[test]
fn disability_cashflow_agrees_with_simulation() {
    let (engine, z) = disability_cashflow::run_example(20_000).unwrap();
    assert!(engine.iter().all(|c| c.is_finite() && *c >= 0.0));
    let within = z.iter().filter(|z| z.abs() <= 3.0).count();
    assert!(within * 100 >= 90 * z.len(), "{within}/{}", z.len());
}

#[test]
fn longer_disability_pays_more() {
    let (fresh, later) = duration_dependent_augmentation::run_example(10.0).unwrap();
    let a: f64 = fresh.iter().sum();
    let b: f64 = later.iter().sum();
    assert!(b > a, "{b} <= {a}");
}

#[test]
fn fair_premium_equals_intensity() {
    let (v, c) = reserve_and_premium::run_example().unwrap();
    let exact = 0.3 / 0.35 * (1.0 - (-3.5f64).exp());
    assert!((v - exact).abs() < 1e-7, "{v} vs {exact}");
    assert!((c - 0.3).abs() < 1e-7, "{c}");
}

#[test]
fn simulated_survival() {
    let p = monte_carlo_oracle::run_example(20_000).unwrap();
    let exact = (-1.0f64).exp();
    let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
    assert!((p - exact).abs() < 4.0 * se, "{p}");
}

#[test]
fn convergence_means_shrink() {
    let m = convergence_diagnostics::run_example(&[10.0, 100.0], &[1, 2, 3]).unwrap();
    assert!(m[1].1 < m[0].1 && m[1].2 < m[0].2, "{m:?}");
}

#[test]
fn validation_finds_bound_violations() {
    let (good, bad) = validate_family::run_example().unwrap();
    assert_eq!(good, 0);
    assert!(bad > 0);
}
