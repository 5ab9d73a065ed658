//! The Poissonian uniformization grid.
//!
//! Arrivals are generated with ChaCha8 seeded through `seed_from_u64`;
//! each increment is `-ln(1 - U) / gamma` for `U` uniform on `[0, 1)`
//! (53-bit mantissa draw). The stream is platform independent, so a
//! `(gamma, horizon, tail_prob, seed)` tuple always yields the same grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::poisson_truncation_index;

/// Default truncation probability for the Poisson tail.
pub const DEFAULT_TAIL_PROB: f64 = 1e-10;

/// Sampled arrival times `0 = chi_0 < chi_1 < ...` of a Poisson process.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonGrid {
    gamma: f64,
    horizon: f64,
    seed: Option<u64>,
    arrivals: Vec<f64>,
    max_index: usize,
}

impl PoissonGrid {
    pub fn sample(gamma: f64, horizon: f64, tail_prob: f64, seed: u64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        if !(tail_prob > 0.0 && tail_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail_prob must lie in (0, 1), got {tail_prob}"
            )));
        }
        let tail_index = poisson_truncation_index(gamma * horizon, tail_prob).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arrivals = vec![0.0];
        let mut t = 0.0;
        // Keep one arrival beyond the truncation index: Q(l, w) reads chi_{l+1}.
        loop {
            let u: f64 = rng.gen();
            t += -(-u).ln_1p() / gamma;
            arrivals.push(t);
            let l = arrivals.len() - 1;
            if l > tail_index && arrivals[l - 1] > horizon {
                break;
            }
        }
        let max_index = arrivals.len() - 2;
        Ok(Self {
            gamma,
            horizon,
            seed: Some(seed),
            arrivals,
            max_index,
        })
    }

    /// Grid with caller-supplied arrivals (must start at 0 and increase).
    pub fn from_arrivals(gamma: f64, horizon: f64, arrivals: Vec<f64>) -> Result<Self> {
        if arrivals.len() < 2 || arrivals[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "arrivals must start at 0 and contain at least one arrival".into(),
            ));
        }
        if arrivals.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("arrivals must be strictly increasing".into()));
        }
        let max_index = arrivals.len() - 2;
        Ok(Self {
            gamma,
            horizon,
            seed: None,
            arrivals,
            max_index,
        })
    }

    /// The deterministic grid `chi_l = l / gamma`.
    pub fn deterministic(gamma: f64, horizon: f64, len: usize) -> Self {
        let arrivals = (0..=len + 1).map(|l| l as f64 / gamma).collect();
        Self {
            gamma,
            horizon,
            seed: None,
            arrivals,
            max_index: len,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Largest index `L` usable as a recursion level; `chi_{L+1}` is stored.
    pub fn max_index(&self) -> usize {
        self.max_index
    }

    /// Number of arrivals in `(0, horizon]`.
    pub fn horizon_count(&self) -> usize {
        self.arrivals[1..].iter().take_while(|&&t| t <= self.horizon).count()
    }

    #[inline]
    pub fn arrival(&self, l: usize) -> f64 {
        self.arrivals[l]
    }

    pub fn arrivals(&self) -> &[f64] {
        &self.arrivals
    }

    pub fn increments(&self) -> Vec<f64> {
        self.arrivals.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `sup_{l <= floor(gamma^{1+eps})} |chi_l - l / gamma|`, restricted to
    /// the stored arrivals.
    pub fn deviation(&self, epsilon: f64) -> GridDeviation {
        let requested = self.gamma.powf(1.0 + epsilon).floor() as usize;
        let available = self.arrivals.len() - 1;
        let used = requested.min(available);
        let value = (0..=used)
            .map(|l| (self.arrivals[l] - l as f64 / self.gamma).abs())
            .fold(0.0, f64::max);
        GridDeviation {
            value,
            requested_index: requested,
            used_index: used,
            truncated: used < requested,
        }
    }
}

/// Result of [`PoissonGrid::deviation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDeviation {
    pub value: f64,
    pub requested_index: usize,
    pub used_index: usize,
    pub truncated: bool,
}

/// `2 e^{1/2 + eps/2 + 2q} (log gamma) gamma^{-1/2 + eps/2}`: the high
/// probability envelope for the grid deviation.
pub fn deviation_envelope(gamma: f64, epsilon: f64, q: f64) -> f64 {
    2.0 * (0.5 + epsilon / 2.0 + 2.0 * q).exp() * gamma.ln() * gamma.powf(-0.5 + epsilon / 2.0)
}

pub fn sample_grid(gamma: f64, horizon: f64, tail_prob: f64, seed: u64) -> Result<PoissonGrid> {
    PoissonGrid::sample(gamma, horizon, tail_prob, seed)
}

pub fn grid_deviation(grid: &PoissonGrid, epsilon: f64) -> GridDeviation {
    grid.deviation(epsilon)
}
