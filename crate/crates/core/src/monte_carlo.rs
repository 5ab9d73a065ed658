//! Path simulation of the semi-Markov process and Monte Carlo estimators
//! of cashflows and reserves.
//!
//! Candidate event times arrive at rate `gamma0`; at each candidate the next
//! state is drawn from `P(k) = delta_{zeta,k} + Lambda_{zeta,k}(T, dur) /
//! gamma0`, where `dur` is the duration just before the candidate.
//! Self-transitions are discarded. Paths are simulated in a fixed number of
//! chunks, chunk `c` using the ChaCha8 stream `c` of the run seed, and
//! reduced in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::intensity::IntensityFamily;
use crate::quadrature::simpson_uniform;
use crate::valuation::{DiscountCurve, PaymentSpec};

/// Number of independent streams a run is split into.
pub const CHUNKS: usize = 64;

/// A simulated trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// `times[0] = 0`, then the jump times.
    pub times: Vec<f64>,
    /// `states[m]` is occupied on `[times[m], times[m+1])`.
    pub states: Vec<usize>,
    /// Duration just before each jump (`durations[m]` belongs to the jump
    /// at `times[m + 1]`).
    pub durations: Vec<f64>,
    pub initial_duration: f64,
    pub horizon: f64,
    /// Likelihood ratio (1 without importance sampling).
    pub weight: f64,
}

impl PathRecord {
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    /// Duration at the start of sojourn `m`.
    fn sojourn_start_duration(&self, m: usize) -> f64 {
        if m == 0 {
            self.initial_duration
        } else {
            0.0
        }
    }

    /// `(Z(t), U(t))`.
    pub fn state_at(&self, t: f64) -> (usize, f64) {
        let m = self.times.partition_point(|&x| x <= t) - 1;
        (self.states[m], self.sojourn_start_duration(m) + t - self.times[m])
    }

    pub fn first_jump(&self) -> Option<f64> {
        self.times.get(1).copied()
    }
}

/// Exponential tilt of the first jump into `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tilt {
    pub target: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McOptions {
    /// Importance sampling; off by default.
    pub tilt: Option<Tilt>,
}

fn check_rate(family: &dyn IntensityFamily, gamma0_rate: f64) -> Result<()> {
    if !(gamma0_rate >= family.gamma0()) || !(gamma0_rate > 0.0) {
        return Err(Error::RateTooSmall {
            gamma: gamma0_rate,
            gamma0: family.gamma0(),
        });
    }
    Ok(())
}

fn simulate_with<R: Rng>(
    family: &dyn IntensityFamily,
    rate: f64,
    horizon: f64,
    i0: usize,
    u0: f64,
    tilt: Option<Tilt>,
    rng: &mut R,
    buf: &mut [f64],
) -> Result<PathRecord> {
    let n = family.states();
    // The tilted chain keeps a positive self-transition probability so the
    // likelihood ratio stays finite.
    let rate = match tilt {
        Some(t) => rate * (t.factor.max(1.0) + 1.0),
        None => rate,
    };
    let mut times = vec![0.0];
    let mut states = vec![i0];
    let mut durations = Vec::new();
    let mut weight = 1.0;
    let mut t = 0.0;
    let mut zeta = i0;
    let mut start = 0.0;
    let mut start_dur = u0;
    loop {
        let u: f64 = rng.gen();
        t += -(-u).ln_1p() / rate;
        if t > horizon {
            break;
        }
        let dur = start_dur + (t - start);
        family.eval_into(t, dur, buf);
        let row = &buf[zeta * n..(zeta + 1) * n];
        if -row[zeta] > rate * (1.0 + 1e-12) {
            return Err(Error::RateTooSmall {
                gamma: rate,
                gamma0: -row[zeta],
            });
        }
        let tilting = tilt.filter(|_| times.len() == 1);
        let y: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = zeta;
        let mut p_true = 1.0;
        let mut p_used = 1.0;
        let mut total_out_true = 0.0;
        let mut total_out_used = 0.0;
        for k in 0..n {
            if k == zeta {
                continue;
            }
            let lam = row[k];
            let lam_used = match tilting {
                Some(tl) if tl.target == k => lam * tl.factor,
                _ => lam,
            };
            total_out_true += lam;
            total_out_used += lam_used;
            if next == zeta {
                acc += lam_used / rate;
                if y < acc {
                    next = k;
                    p_true = lam / rate;
                    p_used = lam_used / rate;
                }
            }
        }
        if next == zeta {
            p_true = 1.0 - total_out_true / rate;
            p_used = 1.0 - total_out_used / rate;
        }
        if tilting.is_some() {
            weight *= p_true / p_used;
        }
        if next != zeta {
            durations.push(dur);
            times.push(t);
            states.push(next);
            zeta = next;
            start = t;
            start_dur = 0.0;
        }
    }
    Ok(PathRecord {
        times,
        states,
        durations,
        initial_duration: u0,
        horizon,
        weight,
    })
}

/// Simulates one path from state `i0` with initial duration `u0`.
pub fn simulate_path(
    family: &dyn IntensityFamily,
    gamma0_rate: f64,
    horizon: f64,
    i0: usize,
    u0: f64,
    seed: u64,
) -> Result<PathRecord> {
    check_rate(family, gamma0_rate)?;
    check_start(family, horizon, i0, u0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = family.states();
    simulate_with(family, gamma0_rate, horizon, i0, u0, None, &mut rng, &mut vec![0.0; n * n])
}

fn check_start(family: &dyn IntensityFamily, horizon: f64, i0: usize, u0: f64) -> Result<()> {
    if i0 >= family.states() {
        return Err(Error::InvalidArgument(format!(
            "initial state {} out of range 1..={}",
            i0 + 1,
            family.states()
        )));
    }
    if !(u0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("initial duration must be >= 0, got {u0}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    Ok(())
}

/// Runs `n_paths` simulations in [`CHUNKS`] streams and folds each path
/// into an accumulator; accumulators are merged in chunk order.
#[allow(clippy::too_many_arguments)]
fn run_paths<A, F, M>(
    family: &dyn IntensityFamily,
    horizon: f64,
    i0: usize,
    u0: f64,
    n_paths: usize,
    seed: u64,
    options: McOptions,
    init: impl Fn() -> A + Sync,
    fold: F,
    merge: M,
) -> Result<A>
where
    A: Send,
    F: Fn(&mut A, &PathRecord) + Sync,
    M: Fn(&mut A, A),
{
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    check_start(family, horizon, i0, u0)?;
    let rate = family.gamma0();
    if !(rate > 0.0) {
        return Err(Error::InvalidFamily("gamma0 must be > 0 for simulation".into()));
    }
    let n = family.states();
    let parts = (0..CHUNKS)
        .into_par_iter()
        .map(|c| -> Result<A> {
            let count = n_paths / CHUNKS + usize::from(c < n_paths % CHUNKS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut buf = vec![0.0; n * n];
            let mut acc = init();
            for _ in 0..count {
                let path =
                    simulate_with(family, rate, horizon, i0, u0, options.tilt, &mut rng, &mut buf)?;
                fold(&mut acc, &path);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<A>>>()?;
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
        }
    }

    fn push(&mut self, y: &[f64]) {
        for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(y) {
            *s += x;
            *q += x * x;
        }
    }

    fn merge(&mut self, other: Moments) {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
    }

    fn mean_se(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let se = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                if n < 2 {
                    return 0.0;
                }
                let var = ((q - nf * m * m) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            })
            .collect();
        (mean, se)
    }
}

/// Monte Carlo cashflow estimate with standard errors.
#[derive(Debug, Clone)]
pub struct McCurve {
    pub i0: usize,
    pub s_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// `(time, mean, se)` for each discrete payment.
    pub point_masses: Vec<(f64, f64, f64)>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Bins `[lo_a, hi_a]` centred on the grid points, clipped to `[0, T]`.
fn bins(s_grid: &[f64], horizon: f64) -> Vec<(f64, f64)> {
    let m = s_grid.len();
    (0..m)
        .map(|a| {
            let lo = if a == 0 {
                s_grid[0]
            } else {
                0.5 * (s_grid[a - 1] + s_grid[a])
            };
            let hi = if a + 1 == m {
                s_grid[a]
            } else {
                0.5 * (s_grid[a] + s_grid[a + 1])
            };
            (lo.max(0.0), hi.min(horizon))
        })
        .collect()
}

/// Per-path cashflow sample: payment rate at each grid point plus lumps
/// binned by jump time.
fn path_cashflow(
    path: &PathRecord,
    payments: &PaymentSpec,
    s_grid: &[f64],
    bins: &[(f64, f64)],
    out: &mut [f64],
) {
    for (a, &s) in s_grid.iter().enumerate() {
        let (j, v) = path.state_at(s);
        out[a] = payments.rate(j, v, s);
    }
    if payments.has_lumps() {
        for m in 0..path.jumps() {
            let tau = path.times[m + 1];
            let amount = payments.lump(path.states[m], path.durations[m], path.states[m + 1], tau);
            if amount == 0.0 {
                continue;
            }
            // Bins share endpoints; a jump on a boundary goes to the later bin.
            let a = bins.partition_point(|&(lo, _)| lo <= tau).saturating_sub(1);
            let (lo, hi) = bins[a];
            if tau >= lo && tau <= hi && hi > lo {
                out[a] += amount / (hi - lo);
            }
        }
    }
    if path.weight != 1.0 {
        out.iter_mut().for_each(|x| *x *= path.weight);
    }
}

fn path_discrete(path: &PathRecord, payments: &PaymentSpec, out: &mut [f64]) {
    for (d, p) in payments.discrete().iter().enumerate() {
        let (j, v) = path.state_at(p.time);
        let hit = j == p.state
            && p.duration_lo.is_none_or(|l| v >= l)
            && p.duration_hi.is_none_or(|h| v <= h);
        out[d] = if hit { p.amount * path.weight } else { 0.0 };
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mc_cashflow_with(
    family: &dyn IntensityFamily,
    payments: &PaymentSpec,
    i0: usize,
    u0: f64,
    n_paths: usize,
    s_grid: &[f64],
    seed: u64,
    options: McOptions,
) -> Result<McCurve> {
    let horizon = payments.horizon();
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) || s_grid.is_empty() {
        return Err(Error::InvalidArgument("s grid must be non-empty and increasing".into()));
    }
    let bins = bins(s_grid, horizon);
    let m = s_grid.len();
    let nd = payments.discrete().len();
    let moments = run_paths(
        family,
        horizon,
        i0,
        u0,
        n_paths,
        seed,
        options,
        || (Moments::zeros(m), Moments::zeros(nd), vec![0.0; m], vec![0.0; nd]),
        |acc, path| {
            let (mc, md, y, z) = acc;
            path_cashflow(path, payments, s_grid, &bins, y);
            mc.push(y);
            if nd > 0 {
                path_discrete(path, payments, z);
                md.push(z);
            }
        },
        |acc, other| {
            acc.0.merge(other.0);
            acc.1.merge(other.1);
        },
    )?;
    let (mean, se) = moments.0.mean_se(n_paths);
    let (dm, ds) = moments.1.mean_se(n_paths);
    let point_masses = payments
        .discrete()
        .iter()
        .enumerate()
        .map(|(d, p)| (p.time, dm[d], ds[d]))
        .collect();
    Ok(McCurve {
        i0,
        s_grid: s_grid.to_vec(),
        mean,
        se,
        point_masses,
        n_paths,
        seed,
    })
}

/// Plain Monte Carlo cashflow estimate.
pub fn mc_cashflow(
    family: &dyn IntensityFamily,
    payments: &PaymentSpec,
    i0: usize,
    u0: f64,
    n_paths: usize,
    s_grid: &[f64],
    seed: u64,
) -> Result<McCurve> {
    mc_cashflow_with(family, payments, i0, u0, n_paths, s_grid, seed, McOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
}

/// Subintervals per sojourn for the pathwise payment-rate integral.
const SOJOURN_STEPS: usize = 64;

fn path_value(path: &PathRecord, payments: &PaymentSpec, discount: &DiscountCurve) -> f64 {
    let mut total = 0.0;
    let t_end = path.horizon;
    for m in 0..path.states.len() {
        let a = path.times[m];
        let b = path.times.get(m + 1).copied().unwrap_or(t_end).min(t_end);
        if b > a {
            let j = path.states[m];
            let d0 = path.sojourn_start_duration(m);
            let h = (b - a) / SOJOURN_STEPS as f64;
            let y: Vec<f64> = (0..=SOJOURN_STEPS)
                .map(|k| {
                    let s = if k == SOJOURN_STEPS { b } else { a + k as f64 * h };
                    discount.factor(s) * payments.rate(j, d0 + s - a, s)
                })
                .collect();
            total += simpson_uniform(h, &y);
        }
        if m + 1 < path.states.len() {
            let tau = path.times[m + 1];
            total += discount.factor(tau)
                * payments.lump(path.states[m], path.durations[m], path.states[m + 1], tau);
        }
    }
    for p in payments.discrete() {
        let (j, v) = path.state_at(p.time);
        if j == p.state
            && p.duration_lo.is_none_or(|l| v >= l)
            && p.duration_hi.is_none_or(|h| v <= h)
        {
            total += discount.factor(p.time) * p.amount;
        }
    }
    total * path.weight
}

/// Monte Carlo estimate of the reserve at time 0.
pub fn mc_reserve(
    family: &dyn IntensityFamily,
    payments: &PaymentSpec,
    discount: &DiscountCurve,
    i0: usize,
    u0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let m = run_paths(
        family,
        payments.horizon(),
        i0,
        u0,
        n_paths,
        seed,
        McOptions::default(),
        || Moments::zeros(1),
        |acc, path| acc.push(&[path_value(path, payments, discount)]),
        |acc, other| acc.merge(other),
    )?;
    let (mean, se) = m.mean_se(n_paths);
    Ok(McEstimate {
        mean: mean[0],
        se: se[0],
        n_paths,
    })
}

/// Paths generated exactly as in the estimators (for diagnostics).
pub fn simulate_paths(
    family: &dyn IntensityFamily,
    horizon: f64,
    i0: usize,
    u0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathRecord>> {
    run_paths(
        family,
        horizon,
        i0,
        u0,
        n_paths,
        seed,
        McOptions::default(),
        Vec::new,
        |acc, path| acc.push(path.clone()),
        |acc, other| acc.extend(other),
    )
}

/// `(engine - mc) / se`; zero when both agree to `1e-12` with zero error,
/// infinite when they disagree with zero error.
pub fn z_score(engine: f64, mc: f64, se: f64) -> f64 {
    let diff = engine - mc;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::ConstantFamily;
    use crate::linalg::Mat;

    #[test]
    fn frozen_family_never_moves() {
        let f = ConstantFamily::with_gamma0(Mat::zeros(3), 1.0).unwrap();
        let p = simulate_path(&f, 2.0, 10.0, 1, 0.0, 3).unwrap();
        assert_eq!(p.jumps(), 0);
        assert_eq!(p.state_at(7.0), (1, 7.0));
    }

    #[test]
    fn same_seed_same_path_and_no_self_transitions() {
        let f = ConstantFamily::new(Mat::from_rows(&[
            vec![-2.0, 1.0, 1.0],
            vec![0.5, -1.0, 0.5],
            vec![0.0, 0.0, 0.0],
        ]))
        .unwrap();
        let a = simulate_path(&f, 4.0, 5.0, 0, 0.3, 42).unwrap();
        let b = simulate_path(&f, 4.0, 5.0, 0, 0.3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.states.windows(2).all(|w| w[0] != w[1]));
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
        let (_, u) = a.state_at(a.first_jump().unwrap_or(5.0) * 0.5);
        assert!(u >= 0.3);
    }

    #[test]
    fn rate_below_bound_is_rejected() {
        let f = ConstantFamily::new(Mat::from_rows(&[vec![-2.0, 2.0], vec![0.0, 0.0]])).unwrap();
        assert!(simulate_path(&f, 1.0, 1.0, 0, 0.0, 1).is_err());
    }

    #[test]
    fn unit_rate_single_state() {
        let f = ConstantFamily::with_gamma0(Mat::zeros(1), 1.0).unwrap();
        let p = PaymentSpec::new(1, 2.0).with_rate(|_, _, _| 1.0);
        let grid = crate::quadrature::uniform_grid(0.0, 2.0, 10);
        let c = mc_cashflow(&f, &p, 0, 0.0, 100, &grid, 1).unwrap();
        assert!(c.mean.iter().all(|&m| m == 1.0));
        assert!(c.se.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn absorption_probability() {
        let f = ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])).unwrap();
        let p = PaymentSpec::new(2, 1.0).with_lump(|j, _, k, _| if j == 0 && k == 1 { 1.0 } else { 0.0 });
        let est = mc_reserve(&f, &p, &DiscountCurve::zero(), 0, 0.0, 100_000, 9).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        assert!((est.mean - want).abs() <= 3.0 * est.se, "{est:?}");
        assert!((est.se - 0.0015).abs() < 2e-4);
    }

    #[test]
    fn tilted_estimator_is_unbiased() {
        let f = ConstantFamily::new(Mat::from_rows(&[vec![-0.05, 0.05], vec![0.0, 0.0]])).unwrap();
        let p = PaymentSpec::new(2, 1.0).with_lump(|j, _, k, _| if j == 0 && k == 1 { 1.0 } else { 0.0 });
        let grid = crate::quadrature::uniform_grid(0.0, 1.0, 4);
        let opts = McOptions {
            tilt: Some(Tilt {
                target: 1,
                factor: 10.0,
            }),
        };
        let plain = mc_cashflow(&f, &p, 0, 0.0, 40_000, &grid, 5).unwrap();
        let tilted = mc_cashflow_with(&f, &p, 0, 0.0, 40_000, &grid, 5, opts).unwrap();
        let want = 1.0 - (-0.05f64).exp();
        let total = |c: &McCurve| crate::quadrature::trapezoid(&c.s_grid, &c.mean);
        assert!((total(&tilted) - want).abs() < 0.1 * want);
        assert!(tilted.se[2] < plain.se[2]);
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score(1.0, 1.0, 0.0), 0.0);
        assert_eq!(z_score(1.0, 2.0, 0.0), f64::INFINITY);
        assert_eq!(z_score(1.0, 0.5, 0.25), 2.0);
    }
}
