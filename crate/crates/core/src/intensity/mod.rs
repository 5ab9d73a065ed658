//! Intensity families `Lambda(s, v)`: the time- and duration-dependent
//! generator matrices driving a semi-Markov process.

mod disability;
mod spline;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;

pub use disability::{
    DisabilityFamily, DisabilityRates, DisabledMortality, Incidence, Recovery, ACTIVE, DEAD,
    DISABLED,
};
pub use spline::NaturalCubicSpline;

/// Relative tolerance for the zero row-sum check.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A family of `J x J` intensity matrices indexed by time `s` and duration
/// `v`. Evaluation must be pure: the same `(s, v)` always yields the same
/// matrix.
pub trait IntensityFamily: Send + Sync + fmt::Debug {
    fn states(&self) -> usize;

    /// Writes `Lambda(s, v)` row-major into `out` (length `J * J`).
    fn eval_into(&self, s: f64, v: f64, out: &mut [f64]);

    /// Uniform bound on `|Lambda_ii(s, v)|`.
    fn gamma0(&self) -> f64;

    /// Lipschitz constant in the row total-variation norm, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    fn eval(&self, s: f64, v: f64) -> Mat {
        let mut m = Mat::zeros(self.states());
        self.eval_into(s, v, m.as_mut_slice());
        m
    }
}

pub type FamilyRef = Arc<dyn IntensityFamily>;

/// Sets each diagonal entry to minus the sum of the off-diagonal entries in
/// its row.
pub fn fill_diagonal(out: &mut [f64], n: usize) {
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        row[i] = 0.0;
        let off: f64 = row.iter().sum();
        row[i] = -off;
    }
}

/// `Lambda(s, v)` independent of time and duration.
#[derive(Debug, Clone)]
pub struct ConstantFamily {
    matrix: Mat,
    gamma0: f64,
}

impl ConstantFamily {
    /// Takes the bound from the matrix diagonal.
    pub fn new(matrix: Mat) -> Result<Self> {
        let gamma0 = (0..matrix.dim())
            .map(|i| matrix[(i, i)].abs())
            .fold(0.0, f64::max);
        Self::with_gamma0(matrix, gamma0)
    }

    pub fn with_gamma0(matrix: Mat, gamma0: f64) -> Result<Self> {
        check_generator(&matrix).map_err(Error::InvalidFamily)?;
        if !(gamma0 >= 0.0) {
            return Err(Error::InvalidFamily(format!("gamma0 must be >= 0, got {gamma0}")));
        }
        Ok(Self { matrix, gamma0 })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }
}

impl IntensityFamily for ConstantFamily {
    fn states(&self) -> usize {
        self.matrix.dim()
    }

    fn eval_into(&self, _s: f64, _v: f64, out: &mut [f64]) {
        out.copy_from_slice(self.matrix.as_slice());
    }

    fn gamma0(&self) -> f64 {
        self.gamma0
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

fn check_generator(m: &Mat) -> std::result::Result<(), String> {
    let n = m.dim();
    for i in 0..n {
        for j in 0..n {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(format!("entry ({i},{j}) is not finite"));
            }
            if i != j && x < 0.0 {
                return Err(format!("negative off-diagonal entry ({i},{j}) = {x}"));
            }
        }
        let sum: f64 = m.row(i).iter().sum();
        let scale = m.row(i).iter().map(|x| x.abs()).fold(1.0, f64::max);
        if sum.abs() > ROW_SUM_TOL * scale {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    Ok(())
}

/// Off-diagonal rate given by a config expression.
#[derive(Debug, Clone)]
pub struct RateEntry {
    pub from: usize,
    pub to: usize,
    pub rate: Expr,
}

/// Family whose off-diagonal rates are piecewise expressions; the diagonal
/// is the negative row sum.
#[derive(Debug, Clone)]
pub struct ExpressionFamily {
    states: usize,
    entries: Vec<RateEntry>,
    gamma0: f64,
    lipschitz: Option<f64>,
}

impl ExpressionFamily {
    pub fn new(
        states: usize,
        entries: Vec<RateEntry>,
        gamma0: f64,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        if states == 0 {
            return Err(Error::InvalidFamily("at least one state is required".into()));
        }
        for e in &entries {
            if e.from >= states || e.to >= states || e.from == e.to {
                return Err(Error::InvalidFamily(format!(
                    "rate entry {} -> {} is not an off-diagonal transition of a {states}-state model",
                    e.from + 1,
                    e.to + 1
                )));
            }
        }
        if !(gamma0 > 0.0) {
            return Err(Error::InvalidFamily(format!("gamma0 must be > 0, got {gamma0}")));
        }
        Ok(Self {
            states,
            entries,
            gamma0,
            lipschitz,
        })
    }
}

impl IntensityFamily for ExpressionFamily {
    fn states(&self) -> usize {
        self.states
    }

    fn eval_into(&self, s: f64, v: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let n = self.states;
        for e in &self.entries {
            out[e.from * n + e.to] += e.rate.eval(s, v);
        }
        fill_diagonal(out, n);
    }

    fn gamma0(&self) -> f64 {
        self.gamma0
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// `Lambda(t0 + s, v)`.
#[derive(Debug, Clone)]
pub struct Shifted {
    base: FamilyRef,
    t0: f64,
}

impl Shifted {
    pub fn new(base: FamilyRef, t0: f64) -> Self {
        Self { base, t0 }
    }
}

impl IntensityFamily for Shifted {
    fn states(&self) -> usize {
        self.base.states()
    }

    fn eval_into(&self, s: f64, v: f64, out: &mut [f64]) {
        self.base.eval_into(self.t0 + s, v, out)
    }

    fn gamma0(&self) -> f64 {
        self.base.gamma0()
    }

    fn lipschitz(&self) -> Option<f64> {
        self.base.lipschitz()
    }
}

/// The `2J`-state family encoding a start at time `t0` with initial
/// duration `u0`. States `0..J` are "no reset yet" (their duration is
/// `u0 + v`), states `J..2J` are "reset occurred".
#[derive(Debug, Clone)]
pub struct Augmented {
    base: FamilyRef,
    t0: f64,
    u0: f64,
}

impl Augmented {
    pub fn base(&self) -> &FamilyRef {
        &self.base
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn start_duration(&self) -> f64 {
        self.u0
    }

    /// Augmented index of the initial state `i` (block "no reset yet").
    pub fn initial_index(&self, i: usize) -> usize {
        i
    }

    /// Projection of an augmented index onto the base state.
    pub fn project(&self, k: usize) -> usize {
        k % self.base.states()
    }

    /// Whether augmented index `k` belongs to the "no reset yet" block.
    pub fn is_unreset(&self, k: usize) -> bool {
        k < self.base.states()
    }
}

impl IntensityFamily for Augmented {
    fn states(&self) -> usize {
        2 * self.base.states()
    }

    fn eval_into(&self, s: f64, v: f64, out: &mut [f64]) {
        let j = self.base.states();
        let n = 2 * j;
        let mut shifted = vec![0.0; j * j];
        let mut reset = vec![0.0; j * j];
        self.base.eval_into(self.t0 + s, self.u0 + v, &mut shifted);
        self.base.eval_into(self.t0 + s, v, &mut reset);
        out.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..j {
            for b in 0..j {
                let x = shifted[a * j + b];
                if a == b {
                    out[a * n + b] = x;
                } else {
                    out[a * n + j + b] = x;
                }
                out[(j + a) * n + j + b] = reset[a * j + b];
            }
        }
    }

    fn gamma0(&self) -> f64 {
        self.base.gamma0()
    }

    fn lipschitz(&self) -> Option<f64> {
        self.base.lipschitz()
    }
}

/// Builds the augmented family for a start at `(t0, u0)`.
pub fn augment(family: FamilyRef, t0: f64, u0: f64) -> Result<Augmented> {
    if !(t0 >= 0.0) || !(u0 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs t0 >= 0 and u0 >= 0, got t0={t0}, u0={u0}"
        )));
    }
    let probe = validate(family.as_ref(), &[(t0, u0), (t0 + 1.0, u0 + 1.0)])?;
    if !probe.is_valid() {
        return Err(Error::InvalidFamily(format!(
            "base family fails validation: {}",
            probe.violations[0]
        )));
    }
    Ok(Augmented {
        base: family,
        t0,
        u0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NonFinite { i: usize, j: usize },
    NegativeOffDiagonal { i: usize, j: usize, value: f64 },
    RowSum { i: usize, sum: f64 },
    BoundExceeded { i: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub s: f64,
    pub v: f64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s, v) = (self.s, self.v);
        match &self.kind {
            ViolationKind::NonFinite { i, j } => {
                write!(f, "non-finite entry ({},{}) at (s={s}, v={v})", i + 1, j + 1)
            }
            ViolationKind::NegativeOffDiagonal { i, j, value } => write!(
                f,
                "negative off-diagonal ({},{}) = {value} at (s={s}, v={v})",
                i + 1,
                j + 1
            ),
            ViolationKind::RowSum { i, sum } => {
                write!(f, "row {} sums to {sum} at (s={s}, v={v})", i + 1)
            }
            ViolationKind::BoundExceeded { i, value } => write!(
                f,
                "|diagonal {}| = {value} exceeds gamma0 at (s={s}, v={v})",
                i + 1
            ),
        }
    }
}

/// Outcome of sampling a family on a grid.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub points: usize,
    pub gamma0: f64,
    /// Largest `|Lambda_ii|` seen on the grid.
    pub inferred_bound: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks sign, conservativity and the `gamma0` bound at every grid point.
pub fn validate(family: &dyn IntensityFamily, grid: &[(f64, f64)]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("validation grid is empty".into()));
    }
    let n = family.states();
    let gamma0 = family.gamma0();
    let mut buf = vec![0.0; n * n];
    let mut violations = Vec::new();
    let mut inferred: f64 = 0.0;
    for &(s, v) in grid {
        family.eval_into(s, v, &mut buf);
        for i in 0..n {
            let row = &buf[i * n..(i + 1) * n];
            let mut finite = true;
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    violations.push(Violation {
                        s,
                        v,
                        kind: ViolationKind::NonFinite { i, j },
                    });
                    finite = false;
                } else if i != j && x < 0.0 {
                    violations.push(Violation {
                        s,
                        v,
                        kind: ViolationKind::NegativeOffDiagonal { i, j, value: x },
                    });
                }
            }
            if !finite {
                continue;
            }
            let sum: f64 = row.iter().sum();
            let scale = row.iter().map(|x| x.abs()).fold(1.0, f64::max);
            if sum.abs() > ROW_SUM_TOL * scale {
                violations.push(Violation {
                    s,
                    v,
                    kind: ViolationKind::RowSum { i, sum },
                });
            }
            let d = row[i].abs();
            inferred = inferred.max(d);
            if d > gamma0 {
                violations.push(Violation {
                    s,
                    v,
                    kind: ViolationKind::BoundExceeded { i, value: d },
                });
            }
        }
    }
    Ok(ValidationReport {
        points: grid.len(),
        gamma0,
        inferred_bound: inferred,
        violations,
    })
}

/// Cartesian product grid.
pub fn product_grid(s_values: &[f64], v_values: &[f64]) -> Vec<(f64, f64)> {
    s_values
        .iter()
        .flat_map(|&s| v_values.iter().map(move |&v| (s, v)))
        .collect()
}

/// `max_i sum_j |A_ij - B_ij|`.
pub fn row_tv_distance(a: &[f64], b: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (a[i * n + j] - b[i * n + j]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct LipschitzAudit {
    pub constant: f64,
    pub pairs: usize,
    /// Largest observed `TV / (|ds| + |dv|)`.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Samples random point pairs in `[s_lo, s_hi] x [v_lo, v_hi]` and checks
/// the row total-variation Lipschitz bound. Half of the pairs are local
/// (separation at most `local_radius`) so that steep regions are probed.
pub fn lipschitz_audit(
    family: &dyn IntensityFamily,
    s_range: (f64, f64),
    v_range: (f64, f64),
    pairs: usize,
    seed: u64,
) -> Result<LipschitzAudit> {
    let k = family
        .lipschitz()
        .ok_or_else(|| Error::InvalidFamily("family declares no Lipschitz constant".into()))?;
    let n = family.states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for p in 0..pairs {
        let s1 = rng.gen_range(s_range.0..=s_range.1);
        let v1 = rng.gen_range(v_range.0..=v_range.1);
        let (s2, v2) = if p % 2 == 0 {
            (
                rng.gen_range(s_range.0..=s_range.1),
                rng.gen_range(v_range.0..=v_range.1),
            )
        } else {
            let r = 1e-3;
            (
                (s1 + rng.gen_range(-r..=r)).clamp(s_range.0, s_range.1),
                (v1 + rng.gen_range(-r..=r)).clamp(v_range.0, v_range.1),
            )
        };
        let dist = (s1 - s2).abs() + (v1 - v2).abs();
        if dist == 0.0 {
            continue;
        }
        family.eval_into(s1, v1, &mut a);
        family.eval_into(s2, v2, &mut b);
        let tv = row_tv_distance(&a, &b, n);
        max_ratio = max_ratio.max(tv / dist);
        if tv > k * dist * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
    }
    Ok(LipschitzAudit {
        constant: k,
        pairs,
        max_ratio,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FamilyRef {
        Arc::new(ConstantFamily::new(Mat::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])).unwrap())
    }

    #[test]
    fn constant_family_is_valid() {
        let f = two_state();
        let grid = product_grid(&[0.0, 1.0, 5.0], &[0.0, 2.0]);
        let r = validate(f.as_ref(), &grid).unwrap();
        assert!(r.is_valid());
        assert_eq!(r.inferred_bound, 1.0);
        assert!(r.inferred_bound <= r.gamma0);
    }

    #[test]
    fn negative_off_diagonal_is_reported() {
        let bad = ExpressionFamily::new(
            2,
            vec![RateEntry {
                from: 0,
                to: 1,
                rate: Expr(vec![crate::expr::Term {
                    scale: -0.5,
                    factors: vec![crate::expr::Factor::Indicator {
                        var: crate::expr::Var::S,
                        lo: Some(1.0),
                        hi: Some(1.0),
                    }],
                }]),
            }],
            1.0,
            None,
        )
        .unwrap();
        let r = validate(&bad, &[(0.0, 0.0), (1.0, 0.3)]).unwrap();
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!((v.s, v.v), (1.0, 0.3));
        assert!(matches!(
            v.kind,
            ViolationKind::NegativeOffDiagonal { i: 0, j: 1, .. }
        ));
    }

    #[test]
    fn bound_violation_is_reported() {
        let f = ConstantFamily::with_gamma0(
            Mat::from_rows(&[vec![-3.0, 3.0], vec![1.0, -1.0]]),
            2.0,
        )
        .unwrap();
        let r = validate(&f, &[(0.0, 0.0)]).unwrap();
        assert!(matches!(
            r.violations[0].kind,
            ViolationKind::BoundExceeded { i: 0, .. }
        ));
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(validate(two_state().as_ref(), &[]).is_err());
    }

    #[test]
    fn augmentation_at_origin() {
        let base = two_state();
        let aug = augment(base.clone(), 0.0, 0.0).unwrap();
        let m = aug.eval(0.7, 0.2);
        let l = base.eval(0.7, 0.2);
        // upper-left = diag(Lambda), upper-right = Lambda - diag
        assert_eq!(m[(0, 0)], l[(0, 0)]);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(0, 3)], l[(0, 1)]);
        assert_eq!(m[(1, 1)], l[(1, 1)]);
        // lower block reproduces Lambda, lower-left is zero
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(m[(2 + a, 2 + b)], l[(a, b)]);
                assert_eq!(m[(2 + a, b)], 0.0);
            }
        }
        for s in m.row_sums() {
            assert_eq!(s, 0.0);
        }
        assert_eq!(aug.gamma0(), base.gamma0());
    }

    #[test]
    fn augment_rejects_negative_start() {
        assert!(augment(two_state(), -1.0, 0.0).is_err());
        assert!(augment(two_state(), 0.0, -0.1).is_err());
    }
}
