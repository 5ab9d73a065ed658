//! One-step matrices `Q(l, w)` and the `Pi` level recursion.
//!
//! `Pi(k, w)[i][j]` is the probability that after `k` clock ticks the
//! uniformized chain started in `i` (duration counter 0) sits in state `j`
//! with duration counter `w`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PoissonGrid;
use crate::intensity::{row_tv_distance, IntensityFamily};
use crate::linalg::{Mat, TriTable};

/// Tolerance on `sum_{w, j} Pi(k, w)[i][j] = 1`.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Levels at or above this size are built in parallel.
const PAR_LEVEL: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Step matrices read the sampled grid `chi`.
    Conditional,
    /// Step matrices use the mean arrival times `l / gamma`.
    Unconditional,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Conditional => "conditional",
            Mode::Unconditional => "unconditional",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(Mode::Conditional),
            "unconditional" => Ok(Mode::Unconditional),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode '{other}' (expected conditional or unconditional)"
            ))),
        }
    }
}

/// The table of `Q(l, w)` for `0 <= w <= l <= max_level`.
#[derive(Debug, Clone)]
pub struct StepMatrices {
    gamma: f64,
    mode: Mode,
    seed: Option<u64>,
    q: TriTable,
}

impl StepMatrices {
    /// `Q(l, w) = I + Lambda(chi_{l+1}, chi_{l+1} - chi_{l-w}) / gamma`.
    pub fn conditional(
        family: &dyn IntensityFamily,
        grid: &PoissonGrid,
        max_level: usize,
    ) -> Result<Self> {
        let gamma = grid.gamma();
        check_rate(family, gamma)?;
        if max_level > grid.max_index() {
            return Err(Error::InvalidArgument(format!(
                "grid holds levels up to {}, {max_level} requested",
                grid.max_index()
            )));
        }
        let chi = grid.arrivals();
        let q = fill(family, gamma, max_level, |l, w| {
            (chi[l + 1], chi[l + 1] - chi[l - w])
        });
        Ok(Self {
            gamma,
            mode: Mode::Conditional,
            seed: grid.seed(),
            q,
        })
    }

    /// `Q(l, w) = I + Lambda((l + 1) / gamma, (w + 1) / gamma) / gamma`.
    pub fn unconditional(
        family: &dyn IntensityFamily,
        gamma: f64,
        max_level: usize,
    ) -> Result<Self> {
        check_rate(family, gamma)?;
        let q = fill(family, gamma, max_level, |l, w| {
            ((l + 1) as f64 / gamma, (w + 1) as f64 / gamma)
        });
        Ok(Self {
            gamma,
            mode: Mode::Unconditional,
            seed: None,
            q,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Seed of the grid for conditional matrices.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn max_level(&self) -> usize {
        self.q.max_level()
    }

    /// Row-major `Q(l, w)`.
    #[inline]
    pub fn q(&self, l: usize, w: usize) -> &[f64] {
        self.q.block(l, w)
    }

    pub fn q_mat(&self, l: usize, w: usize) -> Mat {
        self.q.mat(l, w)
    }

    /// Diagonal part `Q^d(l, w)`.
    pub fn q_diag(&self, l: usize, w: usize) -> Mat {
        let n = self.dim();
        let b = self.q(l, w);
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = b[i * n + i];
        }
        m
    }

    /// Off-diagonal part `Q^n(l, w)`.
    pub fn q_offdiag(&self, l: usize, w: usize) -> Mat {
        let n = self.dim();
        let mut m = self.q_mat(l, w);
        for i in 0..n {
            m[(i, i)] = 0.0;
        }
        m
    }
}

fn check_rate(family: &dyn IntensityFamily, gamma: f64) -> Result<()> {
    let gamma0 = family.gamma0();
    if !gamma.is_finite() || !(gamma >= gamma0) || !(gamma > 0.0) {
        return Err(Error::RateTooSmall { gamma, gamma0 });
    }
    Ok(())
}

fn fill<F>(family: &dyn IntensityFamily, gamma: f64, max_level: usize, at: F) -> TriTable
where
    F: Fn(usize, usize) -> (f64, f64) + Sync,
{
    let n = family.states();
    let mut q = TriTable::zeros(n, max_level);
    let nn = n * n;
    for l in 0..=max_level {
        q.level_mut(l)
            .par_chunks_mut(nn)
            .enumerate()
            .with_min_len(16)
            .for_each(|(w, block)| {
                let (s, v) = at(l, w);
                family.eval_into(s, v, block);
                for x in block.iter_mut() {
                    *x /= gamma;
                }
                for i in 0..n {
                    block[i * n + i] += 1.0;
                }
            });
    }
    q
}

/// Builds `Q(l, w)` for the requested mode; conditional mode requires a
/// grid.
pub fn build_step_matrices(
    family: &dyn IntensityFamily,
    gamma: f64,
    mode: Mode,
    grid: Option<&PoissonGrid>,
    max_level: usize,
) -> Result<StepMatrices> {
    match mode {
        Mode::Unconditional => StepMatrices::unconditional(family, gamma, max_level),
        Mode::Conditional => {
            let grid = grid.ok_or_else(|| {
                Error::InvalidArgument("conditional mode needs a sampled grid".into())
            })?;
            if grid.gamma() != gamma {
                return Err(Error::InvalidArgument(format!(
                    "grid was sampled at gamma = {}, not {gamma}",
                    grid.gamma()
                )));
            }
            StepMatrices::conditional(family, grid, max_level)
        }
    }
}

/// Computes the next level from the previous one.
fn advance(steps: &StepMatrices, k: usize, prev: &[f64], next: &mut [f64]) {
    let n = steps.dim();
    let nn = n * n;
    let (first, rest) = next.split_at_mut(nn);

    // Pi(k, 0) = sum_{k' < k} Pi(k-1, k') Q^n(k-1, k'), ascending k'.
    first.iter_mut().for_each(|x| *x = 0.0);
    for kp in 0..k {
        let p = &prev[kp * nn..(kp + 1) * nn];
        let q = steps.q(k - 1, kp);
        for i in 0..n {
            for m in 0..n {
                let a = p[i * n + m];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    if j != m {
                        first[i * n + j] += a * q[m * n + j];
                    }
                }
            }
        }
    }

    // Pi(k, v) = Pi(k-1, v-1) Q^d(k-1, v-1).
    let scale = |(vm1, block): (usize, &mut [f64])| {
        let p = &prev[vm1 * nn..(vm1 + 1) * nn];
        let q = steps.q(k - 1, vm1);
        for i in 0..n {
            for j in 0..n {
                block[i * n + j] = p[i * n + j] * q[j * n + j];
            }
        }
    };
    if k >= PAR_LEVEL {
        rest.par_chunks_mut(nn).enumerate().with_min_len(16).for_each(scale);
    } else {
        rest.chunks_mut(nn).enumerate().for_each(scale);
    }
}

/// Lower-triangular table of `Pi(k, w)`, `0 <= w <= k <= max_level`.
#[derive(Debug, Clone)]
pub struct PiTable {
    gamma: f64,
    mode: Mode,
    seed: Option<u64>,
    table: TriTable,
}

impl PiTable {
    pub fn build(steps: &StepMatrices, max_level: usize) -> Result<Self> {
        if max_level > steps.max_level() + 1 {
            return Err(Error::InvalidArgument(format!(
                "step matrices reach level {}, cannot build Pi beyond {}",
                steps.max_level(),
                steps.max_level() + 1
            )));
        }
        let n = steps.dim();
        let mut table = TriTable::zeros(n, max_level);
        {
            let b = table.block_mut(0, 0);
            for i in 0..n {
                b[i * n + i] = 1.0;
            }
        }
        for k in 1..=max_level {
            let (prev, next) = table.level_pair_mut(k);
            advance(steps, k, prev, next);
        }
        Ok(Self {
            gamma: steps.gamma(),
            mode: steps.mode(),
            seed: steps.seed(),
            table,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn max_level(&self) -> usize {
        self.table.max_level()
    }

    /// Row-major `Pi(k, w)`.
    #[inline]
    pub fn block(&self, k: usize, w: usize) -> &[f64] {
        self.table.block(k, w)
    }

    pub fn get(&self, k: usize, w: usize) -> Mat {
        self.table.mat(k, w)
    }

    /// All blocks of level `k`, `w = 0..=k` contiguous.
    pub fn level(&self, k: usize) -> &[f64] {
        self.table.level(k)
    }

    /// `sum_{w, j} Pi(k, w)[i][j]` per initial state `i`.
    pub fn row_mass(&self, k: usize) -> Vec<f64> {
        level_row_mass(self.level(k), self.dim())
    }

    /// Largest deviation of the row mass from 1 over all levels.
    pub fn max_mass_defect(&self) -> f64 {
        (0..=self.max_level())
            .flat_map(|k| self.row_mass(k))
            .map(|m| (m - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn level_row_mass(level: &[f64], n: usize) -> Vec<f64> {
    let mut mass = vec![0.0; n];
    for block in level.chunks(n * n) {
        for i in 0..n {
            mass[i] += block[i * n..(i + 1) * n].iter().sum::<f64>();
        }
    }
    mass
}

pub fn build_pi_table(steps: &StepMatrices, max_level: usize) -> Result<PiTable> {
    PiTable::build(steps, max_level)
}

/// Level-by-level recursion keeping only the current level in memory.
#[derive(Debug)]
pub struct PiStream<'a> {
    steps: &'a StepMatrices,
    k: usize,
    current: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> PiStream<'a> {
    pub fn new(steps: &'a StepMatrices) -> Self {
        let n = steps.dim();
        let mut current = vec![0.0; n * n];
        for i in 0..n {
            current[i * n + i] = 1.0;
        }
        Self {
            steps,
            k: 0,
            current,
            scratch: Vec::new(),
        }
    }

    /// Index of the level currently held.
    pub fn index(&self) -> usize {
        self.k
    }

    /// Blocks `Pi(k, 0..=k)` of the current level.
    pub fn level(&self) -> &[f64] {
        &self.current
    }

    pub fn row_mass(&self) -> Vec<f64> {
        level_row_mass(&self.current, self.steps.dim())
    }

    /// Moves to level `k + 1`; fails once the step matrices run out.
    pub fn advance(&mut self) -> Result<()> {
        if self.k > self.steps.max_level() {
            return Err(Error::InvalidArgument(format!(
                "step matrices exhausted at level {}",
                self.k
            )));
        }
        let nn = self.steps.dim() * self.steps.dim();
        self.k += 1;
        self.scratch.clear();
        self.scratch.resize((self.k + 1) * nn, 0.0);
        advance(self.steps, self.k, &self.current, &mut self.scratch);
        std::mem::swap(&mut self.current, &mut self.scratch);
        Ok(())
    }
}

/// `sum_{w in subset} sum_j |A(k, w)[i][j] - B(k, w)[i][j]|` per row `i`.
pub fn tv_distance(a: &PiTable, b: &PiTable, k: usize, subset: &[usize]) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "tables have {} and {} states",
            a.dim(),
            b.dim()
        )));
    }
    if k > a.max_level() || k > b.max_level() {
        return Err(Error::DimensionMismatch(format!(
            "level {k} exceeds table depth ({} / {})",
            a.max_level(),
            b.max_level()
        )));
    }
    let n = a.dim();
    let mut out = vec![0.0; n];
    for &w in subset {
        if w > k {
            continue;
        }
        let (x, y) = (a.block(k, w), b.block(k, w));
        for i in 0..n {
            for j in 0..n {
                out[i] += (x[i * n + j] - y[i * n + j]).abs();
            }
        }
    }
    Ok(out)
}

/// `C_k` for `k = 0..=max_level + 1`: the running maximum over
/// `0 <= w <= l <= k - 1` of the row TV distance between the two step
/// tables (`C_0 = 0`).
pub fn c_profile(a: &StepMatrices, b: &StepMatrices) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "step tables have {} and {} states",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.dim();
    let top = a.max_level().min(b.max_level());
    let per_level: Vec<f64> = (0..=top)
        .into_par_iter()
        .map(|l| {
            (0..=l)
                .map(|w| row_tv_distance(a.q(l, w), b.q(l, w), n))
                .fold(0.0, f64::max)
        })
        .collect();
    let mut out = Vec::with_capacity(top + 2);
    out.push(0.0);
    let mut running: f64 = 0.0;
    for d in per_level {
        running = running.max(d);
        out.push(running);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::ConstantFamily;

    fn two_state() -> ConstantFamily {
        ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])).unwrap()
    }

    #[test]
    fn constant_step_matrix() {
        let f = two_state();
        let grid = PoissonGrid::sample(2.0, 3.0, 1e-10, 5).unwrap();
        for steps in [
            StepMatrices::unconditional(&f, 2.0, 10).unwrap(),
            StepMatrices::conditional(&f, &grid, 10).unwrap(),
        ] {
            for l in 0..=10 {
                for w in 0..=l {
                    assert_eq!(steps.q(l, w), &[0.5, 0.5, 0.0, 1.0]);
                }
            }
            let d = steps.q_diag(3, 1);
            let o = steps.q_offdiag(3, 1);
            assert_eq!(d.as_slice(), &[0.5, 0.0, 0.0, 1.0]);
            assert_eq!(o.as_slice(), &[0.0, 0.5, 0.0, 0.0]);
        }
    }

    #[test]
    fn rate_below_bound_is_rejected() {
        let f = two_state();
        let err = StepMatrices::unconditional(&f, 0.5, 3).unwrap_err();
        assert!(err.to_string().contains("uniformization rate too small"));
    }

    #[test]
    fn boundary_rate_gives_zero_diagonal() {
        let f = two_state();
        let steps = StepMatrices::unconditional(&f, 1.0, 2).unwrap();
        assert_eq!(steps.q(0, 0)[0], 0.0);
        let pi = PiTable::build(&steps, 2).unwrap();
        assert_eq!(pi.block(1, 1)[0], 0.0);
        assert_eq!(pi.block(1, 0)[1], 1.0);
    }

    #[test]
    fn level_zero_is_identity() {
        let f = two_state();
        let steps = StepMatrices::unconditional(&f, 3.0, 0).unwrap();
        let pi = PiTable::build(&steps, 0).unwrap();
        assert_eq!(pi.get(0, 0).as_slice(), Mat::identity(2).as_slice());
    }

    #[test]
    fn stream_matches_table() {
        let f = two_state();
        let steps = StepMatrices::unconditional(&f, 3.0, 20).unwrap();
        let pi = PiTable::build(&steps, 21).unwrap();
        let mut stream = PiStream::new(&steps);
        for k in 0..=21 {
            assert_eq!(stream.index(), k);
            assert_eq!(stream.level(), pi.level(k));
            if k < 21 {
                stream.advance().unwrap();
            }
        }
        assert!(stream.advance().is_err());
        assert!(pi.max_mass_defect() < 1e-14);
    }

    #[test]
    fn tv_of_identical_tables_is_zero() {
        let f = two_state();
        let steps = StepMatrices::unconditional(&f, 3.0, 5).unwrap();
        let pi = PiTable::build(&steps, 5).unwrap();
        assert_eq!(tv_distance(&pi, &pi, 5, &[0, 1, 2, 3, 4, 5]).unwrap(), vec![0.0, 0.0]);
        let c = c_profile(&steps, &steps).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        assert_eq!(c.len(), 7);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("conditional".parse::<Mode>().unwrap(), Mode::Conditional);
        assert!("both".parse::<Mode>().is_err());
    }
}
