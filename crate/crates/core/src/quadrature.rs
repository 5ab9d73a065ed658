//! Composite and adaptive quadrature rules on sampled or callable
//! integrands.

/// Trapezoid rule on paired samples (non-uniform spacing allowed).
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "inputs must align");
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Composite Simpson on uniformly spaced samples with step `h`.
///
/// An odd number of intervals is closed with Simpson's 3/8 rule on the last
/// three; two samples fall back to the trapezoid rule.
pub fn simpson_uniform(h: f64, y: &[f64]) -> f64 {
    let n = y.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (y[0] + y[1]),
        3 => h / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, 0.0)
            } else {
                let k = n - 4;
                (
                    k,
                    3.0 * h / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]),
                )
            };
            let mut acc = y[0] + y[simpson_end];
            for (i, v) in y.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            h / 3.0 * acc + tail
        }
    }
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `n + 1` equally spaced points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|k| if k == n { b } else { a + k as f64 * h })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        let x = uniform_grid(0.0, 2.0, 10);
        let y: Vec<f64> = x.iter().map(|t| t * t * t - t).collect();
        assert!((simpson_uniform(0.2, &y) - 2.0).abs() < 1e-13);
        // odd number of intervals uses the 3/8 closure, still exact for cubics
        let x = uniform_grid(0.0, 2.0, 9);
        let y: Vec<f64> = x.iter().map(|t| t * t * t - t).collect();
        assert!((simpson_uniform(2.0 / 9.0, &y) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let x = [0.0, 0.5, 2.0];
        let y = [1.0, 2.0, 5.0];
        assert!((trapezoid(&x, &y) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_simpson_exp() {
        let v = adaptive_simpson(|t: f64| (-t).exp(), 0.0, 3.0, 1e-12);
        assert!((v - (1.0 - (-3.0f64).exp())).abs() < 1e-11);
    }
}
