//! Distributional checks on the path simulator.

use std::sync::Arc;

use smj::expr::{Expr, Factor, Term, Var};
use smj::intensity::{DisabilityFamily, ExpressionFamily, RateEntry, Shifted, DISABLED};
use smj::monte_carlo::{simulate_path, simulate_paths};

/// Kolmogorov-Smirnov critical value at the 1% level.
const KS_1PCT: f64 = 1.63;

fn ks_one_sample(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut k = 0;
    while k < x.len() {
        let t = x[k];
        let below = k as f64 / n;
        while k < x.len() && x[k] == t {
            k += 1;
        }
        let at = k as f64 / n;
        // cdf(t-) against the count below t, cdf(t) against the count up to t
        let left = cdf(t - 1e-12 * t.abs().max(1.0));
        d = d.max((left - below).abs()).max((cdf(t) - at).abs());
    }
    d
}

fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut pts: Vec<f64> = a.iter().chain(&b).copied().collect();
    pts.sort_by(f64::total_cmp);
    pts.iter()
        .map(|&t| {
            let fa = a.partition_point(|&x| x <= t) as f64 / na;
            let fb = b.partition_point(|&x| x <= t) as f64 / nb;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

/// Two states, hazard `min(v, 1)` out of the first.
fn ramp_family() -> ExpressionFamily {
    let rate = Expr(vec![Term {
        scale: 1.0,
        factors: vec![Factor::Poly {
            var: Var::V,
            coeffs: vec![0.0, 1.0],
            clamp_lo: None,
            clamp_hi: Some(1.0),
        }],
    }]);
    ExpressionFamily::new(2, vec![RateEntry { from: 0, to: 1, rate }], 1.0, None).unwrap()
}

/// `int_0^x min(y, 1) dy`.
fn ramp_integral(x: f64) -> f64 {
    if x <= 1.0 {
        x * x / 2.0
    } else {
        0.5 + (x - 1.0)
    }
}

fn first_jumps(f: &dyn smj::intensity::IntensityFamily, horizon: f64, u0: f64, n: usize, seed: u64) -> Vec<f64> {
    simulate_paths(f, horizon, 0, u0, n, seed)
        .unwrap()
        .iter()
        .map(|p| p.first_jump().unwrap_or(horizon))
        .collect()
}

#[test]
fn ramp_hazard_survival() {
    let f = ramp_family();
    let horizon = 3.0;
    let n = 4000;
    for u0 in [0.0, 0.5] {
        let x = first_jumps(&f, horizon, u0, n, 9);
        let cdf = |t: f64| {
            if t >= horizon {
                1.0
            } else {
                1.0 - (-(ramp_integral(u0 + t) - ramp_integral(u0))).exp()
            }
        };
        let d = ks_one_sample(x, cdf);
        assert!(d < KS_1PCT / (n as f64).sqrt(), "u0 {u0}: D = {d}");
    }
}

#[test]
fn thinning_rate_does_not_change_law() {
    let f = Shifted::new(Arc::new(DisabilityFamily::shipped()), 40.0);
    let horizon = 5.0;
    let n = 3000;
    let sample = |rate: f64, offset: u64| -> (Vec<f64>, Vec<f64>) {
        (0..n as u64)
            .map(|k| {
                let p = simulate_path(&f, rate, horizon, DISABLED, 0.3, offset + k).unwrap();
                let end = p.state_at(horizon);
                (p.first_jump().unwrap_or(horizon), end.0 as f64 + end.1 / 100.0)
            })
            .unzip()
    };
    let (a_jump, a_end) = sample(8.0, 0);
    let (b_jump, b_end) = sample(24.0, 1_000_000);
    let crit = KS_1PCT * (2.0 / n as f64).sqrt();
    let d1 = ks_two_sample(a_jump, b_jump);
    let d2 = ks_two_sample(a_end, b_end);
    assert!(d1 < crit, "first jump D = {d1}");
    assert!(d2 < crit, "terminal state D = {d2}");
}

#[test]
fn paths_are_reproducible() {
    let f = ramp_family();
    let a = simulate_paths(&f, 2.0, 0, 0.0, 500, 42).unwrap();
    let b = simulate_paths(&f, 2.0, 0, 0.0, 500, 42).unwrap();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.times, q.times);
        assert_eq!(p.states, q.states);
    }
}
