//! Transition and jump measures assembled from a `Pi` table.
//!
//! For time `s` and initial state `i` the transition measure splits into an
//! atom at `v = s` and a density over `v in [0, s)`:
//!
//! ```text
//! atom_ii(s)       = sum_l Poi_{gs}(l) Pi_ii(l, l)
//! density_ij(s, v) = sum_{l > w} Erl_{l-w, g}(s - v) Poi_{gv}(w) Pi_ij(l, w)
//! ```
//!
//! Jump measures weight the same terms by `g Q_jk(l, w)`. The Erlang factor
//! is evaluated as `g Poi_{g(s-v)}(l - w - 1)`, so both factors come from
//! Poisson weight windows.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PoissonGrid;
use crate::intensity::IntensityFamily;
use crate::linalg::Mat;
use crate::pi::{Mode, PiTable, StepMatrices};
use crate::quadrature::{trapezoid, uniform_grid};
use crate::special::{poisson_truncation_index, poisson_upper_tail, NeumaierSum, PoissonWindow};

/// Default number of `v` intervals on `[0, s]`.
pub const DEFAULT_NV: usize = 200;

/// Step matrices and `Pi` table sized for a horizon.
#[derive(Debug, Clone)]
pub struct Kernel {
    steps: StepMatrices,
    pi: PiTable,
    horizon: f64,
}

impl Kernel {
    /// Builds steps and `Pi` up to the level where the Poisson(`gamma *
    /// horizon`) tail drops below `tail_prob` (capped by the grid length in
    /// conditional mode).
    pub fn build(
        family: &dyn IntensityFamily,
        gamma: f64,
        mode: Mode,
        grid: Option<&PoissonGrid>,
        horizon: f64,
        tail_prob: f64,
    ) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be >= 0, got {horizon}")));
        }
        if !(tail_prob > 0.0 && tail_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail_prob must lie in (0, 1), got {tail_prob}"
            )));
        }
        let mut levels = poisson_truncation_index(gamma * horizon, tail_prob).max(1);
        if let (Mode::Conditional, Some(g)) = (mode, grid) {
            levels = levels.min(g.max_index());
        }
        let steps = crate::pi::build_step_matrices(family, gamma, mode, grid, levels)?;
        let pi = PiTable::build(&steps, levels)?;
        Self::new(steps, pi, horizon)
    }

    pub fn new(steps: StepMatrices, pi: PiTable, horizon: f64) -> Result<Self> {
        if steps.dim() != pi.dim() {
            return Err(Error::DimensionMismatch(format!(
                "steps have {} states, Pi has {}",
                steps.dim(),
                pi.dim()
            )));
        }
        if steps.max_level() < pi.max_level() {
            return Err(Error::DimensionMismatch(format!(
                "steps reach level {}, Pi reaches {}",
                steps.max_level(),
                pi.max_level()
            )));
        }
        Ok(Self {
            steps,
            pi,
            horizon,
        })
    }

    pub fn steps(&self) -> &StepMatrices {
        &self.steps
    }

    pub fn pi(&self) -> &PiTable {
        &self.pi
    }

    pub fn gamma(&self) -> f64 {
        self.steps.gamma()
    }

    pub fn mode(&self) -> Mode {
        self.steps.mode()
    }

    pub fn seed(&self) -> Option<u64> {
        self.steps.seed()
    }

    pub fn dim(&self) -> usize {
        self.pi.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn max_level(&self) -> usize {
        self.pi.max_level()
    }

    /// Poisson mass at time `s` beyond the last level of the table.
    pub fn truncation_mass(&self, s: f64) -> f64 {
        poisson_upper_tail(self.gamma() * s, self.max_level())
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {s}")));
        }
        if s > self.horizon * (1.0 + 1e-12) {
            return Err(Error::BeyondHorizon {
                s,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn check_v_grid(&self, s: f64, v_grid: &[f64]) -> Result<()> {
        if v_grid.iter().any(|&v| !(v >= 0.0) || v > s) {
            return Err(Error::InvalidArgument(format!(
                "durations must lie in [0, {s}]"
            )));
        }
        if v_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("duration grid must increase".into()));
        }
        Ok(())
    }

    /// Measures for a single initial state `i`.
    pub fn row(&self, s: f64, i: usize, v_grid: &[f64], with_jumps: bool) -> Result<RowMeasure> {
        self.check_time(s)?;
        self.check_v_grid(s, v_grid)?;
        let n = self.dim();
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "initial state {} out of range 1..={n}",
                i + 1
            )));
        }
        let gamma = self.gamma();
        let top = self.max_level();
        let window = PoissonWindow::new(gamma * s);

        // Atom and closed-form integrals over v.
        let mut atom = NeumaierSum::default();
        let mut jump_atom = vec![NeumaierSum::default(); if with_jumps { n } else { 0 }];
        let mut integrated = vec![NeumaierSum::default(); n];
        let mut jump_integrated = vec![NeumaierSum::default(); if with_jumps { n * n } else { 0 }];
        for (l, p) in window.iter_upto(top) {
            let diag = self.pi.block(l, l)[i * n + i];
            atom.add(p * diag);
            if with_jumps && diag != 0.0 {
                let q = self.steps.q(l, l);
                for k in 0..n {
                    if k != i {
                        jump_atom[k].add(p * diag * gamma * q[i * n + k]);
                    }
                }
            }
            for w in 0..l {
                let row = &self.pi.block(l, w)[i * n..(i + 1) * n];
                for j in 0..n {
                    integrated[j].add(p * row[j]);
                }
                if with_jumps {
                    let q = self.steps.q(l, w);
                    for j in 0..n {
                        let a = p * row[j];
                        if a == 0.0 {
                            continue;
                        }
                        for k in 0..n {
                            if k != j {
                                jump_integrated[j * n + k].add(a * gamma * q[j * n + k]);
                            }
                        }
                    }
                }
            }
        }

        let densities: Vec<(Vec<f64>, Vec<f64>)> = v_grid
            .par_iter()
            .map(|&v| self.density_at(s, v, i, with_jumps))
            .collect();
        let (density, jump_density) = densities.into_iter().unzip();

        Ok(RowMeasure {
            s,
            i,
            states: n,
            v_grid: v_grid.to_vec(),
            atom: atom.value(),
            density,
            integrated: integrated.iter().map(NeumaierSum::value).collect(),
            jump_atom: jump_atom.iter().map(NeumaierSum::value).collect(),
            jump_density,
            jump_integrated: jump_integrated.iter().map(NeumaierSum::value).collect(),
            truncation_mass: self.truncation_mass(s),
        })
    }

    /// Density row `j -> p^c_ij(s, v)` and, optionally, the jump density
    /// `(j, k) -> p^c_{i;jk}(s, v)`. At `v = s` this is the left limit.
    fn density_at(&self, s: f64, v: f64, i: usize, with_jumps: bool) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let gamma = self.gamma();
        let top = self.max_level();
        let mut dens = vec![0.0; n];
        let mut jumps = vec![0.0; if with_jumps { n * n } else { 0 }];
        let before = PoissonWindow::new(gamma * v);
        let after = PoissonWindow::new(gamma * (s - v).max(0.0));
        for (w, pw) in before.iter_upto(top.saturating_sub(1)) {
            let cw = gamma * pw;
            for (m1, pm) in after.iter_upto(top - w - 1) {
                let l = w + m1 + 1;
                let c = cw * pm;
                let row = &self.pi.block(l, w)[i * n..(i + 1) * n];
                for j in 0..n {
                    dens[j] += c * row[j];
                }
                if with_jumps {
                    let q = self.steps.q(l, w);
                    for j in 0..n {
                        let a = c * row[j];
                        if a == 0.0 {
                            continue;
                        }
                        for k in 0..n {
                            if k != j {
                                jumps[j * n + k] += a * gamma * q[j * n + k];
                            }
                        }
                    }
                }
            }
        }
        (dens, jumps)
    }

    pub fn transition_measure(&self, s: f64, v_grid: &[f64]) -> Result<TransitionMeasure> {
        let rows = (0..self.dim())
            .map(|i| self.row(s, i, v_grid, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransitionMeasure::from_rows(rows))
    }

    pub fn jump_measure(&self, s: f64, v_grid: &[f64]) -> Result<JumpMeasure> {
        let rows = (0..self.dim())
            .map(|i| self.row(s, i, v_grid, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(JumpMeasure::from_rows(rows))
    }
}

/// `N_v + 1` equally spaced durations on `[0, s]`; the last point is the
/// left limit of the density at `v = s`.
pub fn default_v_grid(s: f64, n_v: usize) -> Vec<f64> {
    if s == 0.0 {
        return vec![0.0];
    }
    uniform_grid(0.0, s, n_v.max(1))
}

/// Measures for one initial state `i` at time `s`.
#[derive(Debug, Clone)]
pub struct RowMeasure {
    pub s: f64,
    pub i: usize,
    pub states: usize,
    pub v_grid: Vec<f64>,
    /// `p^a_ii(s)`; the atom vanishes off the diagonal.
    pub atom: f64,
    /// `density[v][j]`.
    pub density: Vec<Vec<f64>>,
    /// `int_0^s p^c_ij(s, v) dv` in closed form.
    pub integrated: Vec<f64>,
    /// `jump_atom[k] = p^a_{i;ik}(s)` (empty without jumps).
    pub jump_atom: Vec<f64>,
    /// `jump_density[v][j * J + k]`.
    pub jump_density: Vec<Vec<f64>>,
    /// `jump_integrated[j * J + k]` in closed form.
    pub jump_integrated: Vec<f64>,
    pub truncation_mass: f64,
}

impl RowMeasure {
    pub fn has_jumps(&self) -> bool {
        !self.jump_atom.is_empty()
    }

    /// `1 - sum_j (atom_ij + int density_ij)`, signed.
    pub fn defect(&self) -> f64 {
        let mut sum = NeumaierSum::default();
        sum.add(self.atom);
        for &x in &self.integrated {
            sum.add(x);
        }
        1.0 - sum.value()
    }

    /// Trapezoid integral of the tabulated density of target `j`.
    pub fn integrated_trapezoid(&self, j: usize) -> f64 {
        let y: Vec<f64> = self.density.iter().map(|d| d[j]).collect();
        trapezoid(&self.v_grid, &y)
    }
}

/// `p_ij(s, dv)` for all `i, j`.
#[derive(Debug, Clone)]
pub struct TransitionMeasure {
    pub s: f64,
    pub v_grid: Vec<f64>,
    pub atom: Mat,
    /// One matrix per `v_grid` point.
    pub density: Vec<Mat>,
    /// Closed-form `int_0^s density dv`.
    pub integrated: Mat,
    pub truncation_mass: f64,
}

impl TransitionMeasure {
    fn from_rows(rows: Vec<RowMeasure>) -> Self {
        let n = rows.len();
        let s = rows[0].s;
        let v_grid = rows[0].v_grid.clone();
        let mut atom = Mat::zeros(n);
        let mut integrated = Mat::zeros(n);
        let mut density = vec![Mat::zeros(n); v_grid.len()];
        for r in &rows {
            atom[(r.i, r.i)] = r.atom;
            for j in 0..n {
                integrated[(r.i, j)] = r.integrated[j];
                for (d, row) in density.iter_mut().zip(&r.density) {
                    d[(r.i, j)] = row[j];
                }
            }
        }
        Self {
            s,
            v_grid,
            atom,
            density,
            integrated,
            truncation_mass: rows[0].truncation_mass,
        }
    }

    pub fn dim(&self) -> usize {
        self.atom.dim()
    }

    /// `sum_v p_ij(s, dv)`.
    pub fn marginal(&self) -> Mat {
        let mut m = self.atom.clone();
        m.add_assign(&self.integrated);
        m
    }
}

/// `|1 - sum_j (atom_ij + int density_ij)|` per initial state.
pub fn normalization_report(m: &TransitionMeasure) -> Vec<f64> {
    let n = m.dim();
    (0..n)
        .map(|i| {
            let mut sum = NeumaierSum::default();
            sum.add(m.atom[(i, i)]);
            for j in 0..n {
                sum.add(m.integrated[(i, j)]);
            }
            (1.0 - sum.value()).abs()
        })
        .collect()
}

/// `p_{i;jk}(s, dv)` for all `i` and `j != k`.
#[derive(Debug, Clone)]
pub struct JumpMeasure {
    pub s: f64,
    pub states: usize,
    pub v_grid: Vec<f64>,
    /// `atom[(i * J + j) * J + k]`, nonzero only for `j = i`.
    pub atom: Vec<f64>,
    /// `density[v][(i * J + j) * J + k]`.
    pub density: Vec<Vec<f64>>,
    pub integrated: Vec<f64>,
}

impl JumpMeasure {
    fn from_rows(rows: Vec<RowMeasure>) -> Self {
        let n = rows.len();
        let nn = n * n;
        let v_grid = rows[0].v_grid.clone();
        let mut atom = vec![0.0; n * nn];
        let mut integrated = vec![0.0; n * nn];
        let mut density = vec![vec![0.0; n * nn]; v_grid.len()];
        for r in &rows {
            for k in 0..n {
                atom[(r.i * n + r.i) * n + k] = r.jump_atom[k];
            }
            integrated[r.i * nn..(r.i + 1) * nn].copy_from_slice(&r.jump_integrated);
            for (d, row) in density.iter_mut().zip(&r.jump_density) {
                d[r.i * nn..(r.i + 1) * nn].copy_from_slice(row);
            }
        }
        Self {
            s: rows[0].s,
            states: n,
            v_grid,
            atom,
            density,
            integrated,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.states + j) * self.states + k
    }
}

/// Writes a transition measure as CSV rows `(s, v, i, j, p_type, value,
/// mode, gamma, seed)`: density rows for `v < s` and one atom row per
/// `(i, j)` at `v = s`. States are 1-based.
pub fn write_transition_csv<W: Write>(
    out: &mut csv::Writer<W>,
    m: &TransitionMeasure,
    mode: Mode,
    gamma: f64,
    seed: Option<u64>,
) -> Result<()> {
    let n = m.dim();
    let seed = seed.map(|x| x.to_string()).unwrap_or_default();
    let mode = mode.as_str();
    let gamma = gamma.to_string();
    let s = m.s.to_string();
    for i in 0..n {
        for j in 0..n {
            for (v, d) in m.v_grid.iter().zip(&m.density) {
                if *v >= m.s && m.s > 0.0 {
                    continue;
                }
                out.write_record([
                    s.as_str(),
                    &v.to_string(),
                    &(i + 1).to_string(),
                    &(j + 1).to_string(),
                    "density",
                    &d[(i, j)].to_string(),
                    mode,
                    &gamma,
                    &seed,
                ])?;
            }
            out.write_record([
                s.as_str(),
                s.as_str(),
                &(i + 1).to_string(),
                &(j + 1).to_string(),
                "atom",
                &m.atom[(i, j)].to_string(),
                mode,
                &gamma,
                &seed,
            ])?;
        }
    }
    Ok(())
}

pub const TRANSITION_HEADER: [&str; 9] =
    ["s", "v", "i", "j", "p_type", "value", "mode", "gamma", "seed"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::ConstantFamily;

    fn two_state_kernel(gamma: f64, horizon: f64) -> Kernel {
        let f = ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])).unwrap();
        Kernel::build(&f, gamma, Mode::Unconditional, None, horizon, 1e-10).unwrap()
    }

    #[test]
    fn single_state_atom_is_one() {
        let f = ConstantFamily::new(Mat::from_rows(&[vec![0.0]])).unwrap();
        let f = ConstantFamily::with_gamma0(f.matrix().clone(), 1.0).unwrap();
        let k = Kernel::build(&f, 5.0, Mode::Unconditional, None, 3.0, 1e-12).unwrap();
        for s in [0.3, 1.0, 3.0] {
            let m = k.transition_measure(s, &default_v_grid(s, 20)).unwrap();
            assert!((m.atom[(0, 0)] - 1.0).abs() < 1e-12);
            assert_eq!(m.integrated[(0, 0)], 0.0);
            assert!(normalization_report(&m)[0] < 1e-12);
            let j = k.jump_measure(s, &default_v_grid(s, 20)).unwrap();
            assert!(j.atom.iter().chain(&j.integrated).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn small_time_is_almost_identity() {
        let k = two_state_kernel(10.0, 1.0);
        let s = 1e-9;
        let m = k.transition_measure(s, &default_v_grid(s, 10)).unwrap();
        assert!((m.atom[(0, 0)] - 1.0).abs() < 1e-7);
        assert!(m.integrated[(0, 1)] < 1e-7);
    }

    #[test]
    fn zero_time_gives_identity() {
        let k = two_state_kernel(10.0, 1.0);
        let m = k.transition_measure(0.0, &[0.0]).unwrap();
        assert_eq!(m.atom.as_slice(), Mat::identity(2).as_slice());
    }

    #[test]
    fn beyond_horizon_is_rejected() {
        let k = two_state_kernel(10.0, 1.0);
        assert!(matches!(
            k.transition_measure(1.5, &[0.0]),
            Err(Error::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn density_integrates_to_closed_form() {
        let k = two_state_kernel(30.0, 2.0);
        let s = 1.5;
        let r = k.row(s, 0, &default_v_grid(s, 2000), false).unwrap();
        let quad = r.integrated_trapezoid(1);
        assert!((quad - r.integrated[1]).abs() < 1e-6, "{quad} vs {}", r.integrated[1]);
    }

    #[test]
    fn csv_shape() {
        let k = two_state_kernel(4.0, 1.0);
        let n_v = 7;
        let m = k.transition_measure(1.0, &default_v_grid(1.0, n_v)).unwrap();
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(TRANSITION_HEADER).unwrap();
        write_transition_csv(&mut w, &m, Mode::Unconditional, 4.0, None).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * (n_v + 1));
    }
}
