//! Poisson and Erlang special functions, evaluated in log-space.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Pmf values below this are dropped when building weight windows.
pub const WEIGHT_CUT: f64 = 1e-18;

/// `ln(e^{-lambda} lambda^k / k!)`; `lambda >= 0` is assumed.
#[inline]
pub fn ln_poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    -lambda + kf * lambda.ln() - ln_gamma(kf + 1.0)
}

/// Poisson probability mass `e^{-lambda} lambda^k / k!`.
pub fn poisson_pmf(lambda: f64, k: i64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "poisson rate must be finite and >= 0, got {lambda}"
        )));
    }
    if k < 0 {
        return Err(Error::InvalidArgument(format!(
            "poisson index must be >= 0, got {k}"
        )));
    }
    Ok(ln_poisson_pmf(lambda, k as u64).exp().min(1.0))
}

/// Erlang density `rate (rate x)^{k-1} e^{-rate x} / (k-1)!`, i.e.
/// `rate * Poi_{rate x}(k - 1)`.
pub fn erlang_pdf(k: i64, rate: f64, x: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument(format!(
            "erlang shape must be >= 1, got {k}"
        )));
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "erlang rate must be > 0, got {rate}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "erlang argument must be >= 0, got {x}"
        )));
    }
    Ok((rate.ln() + ln_poisson_pmf(rate * x, (k - 1) as u64)).exp())
}

/// Contiguous window of non-negligible Poisson weights, `weights[i]` being
/// the pmf at `lo + i`.
#[derive(Debug, Clone)]
pub struct PoissonWindow {
    pub lo: usize,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    /// Weights above [`WEIGHT_CUT`], built by recurrence outward from the
    /// mode.
    pub fn new(lambda: f64) -> Self {
        Self::with_cut(lambda, WEIGHT_CUT)
    }

    pub fn with_cut(lambda: f64, cut: f64) -> Self {
        if lambda <= 0.0 {
            return Self {
                lo: 0,
                weights: vec![1.0],
            };
        }
        let mode = lambda.floor() as usize;
        let at_mode = ln_poisson_pmf(lambda, mode as u64).exp();

        let mut down = Vec::new();
        let mut p = at_mode;
        let mut k = mode;
        while k > 0 {
            p *= k as f64 / lambda;
            if p < cut {
                break;
            }
            k -= 1;
            down.push(p);
        }
        let lo = mode - down.len();

        let mut weights: Vec<f64> = down.into_iter().rev().collect();
        weights.push(at_mode);
        let mut p = at_mode;
        let mut k = mode;
        loop {
            p *= lambda / (k + 1) as f64;
            if p < cut {
                break;
            }
            k += 1;
            weights.push(p);
        }
        Self { lo, weights }
    }

    #[inline]
    pub fn hi(&self) -> usize {
        self.lo + self.weights.len() - 1
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        if k < self.lo || k > self.hi() {
            0.0
        } else {
            self.weights[k - self.lo]
        }
    }

    /// `(k, weight)` pairs with `k <= max_k`.
    pub fn iter_upto(&self, max_k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.lo;
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (lo + i, w))
            .take_while(move |&(k, _)| k <= max_k)
    }
}

/// `P(N > l)` for `N ~ Poisson(lambda)`.
pub fn poisson_upper_tail(lambda: f64, l: usize) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if (l as f64) + 1.0 >= lambda {
        // Terms decrease from l + 1 onward: sum them directly.
        let mut p = ln_poisson_pmf(lambda, (l + 1) as u64).exp();
        let mut sum = NeumaierSum::default();
        let mut k = l + 1;
        while p > 0.0 {
            sum.add(p);
            if p < 1e-20 * sum.value() {
                break;
            }
            p *= lambda / (k + 1) as f64;
            k += 1;
        }
        sum.value()
    } else {
        let mut p = ln_poisson_pmf(lambda, l as u64).exp();
        let mut sum = NeumaierSum::default();
        let mut k = l;
        loop {
            sum.add(p);
            if k == 0 || p < 1e-20 * sum.value() {
                break;
            }
            p *= k as f64 / lambda;
            k -= 1;
        }
        (1.0 - sum.value()).max(0.0)
    }
}

/// Smallest `l` with `P(N > l) < tail_prob` for `N ~ Poisson(lambda)`.
pub fn poisson_truncation_index(lambda: f64, tail_prob: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let mut l = lambda.floor() as usize;
    // Walk up in strides, then refine.
    let stride = (lambda.sqrt().ceil() as usize).max(1);
    while poisson_upper_tail(lambda, l) >= tail_prob {
        l += stride;
    }
    while l > 0 && poisson_upper_tail(lambda, l - 1) < tail_prob {
        l -= 1;
    }
    l
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Elementwise compensated accumulator for fixed-length vectors.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    parts: Vec<NeumaierSum>,
}

impl CompensatedVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            parts: vec![NeumaierSum::default(); n],
        }
    }

    #[inline]
    pub fn add_scaled(&mut self, c: f64, xs: &[f64]) {
        for (p, x) in self.parts.iter_mut().zip(xs) {
            p.add(c * x);
        }
    }

    #[inline]
    pub fn add(&mut self, xs: &[f64]) {
        for (p, x) in self.parts.iter_mut().zip(xs) {
            p.add(*x);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.parts.iter().map(NeumaierSum::value).collect()
    }
}
