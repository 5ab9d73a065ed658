//! Expected cashflows, prospective reserves and premium solving.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{PoissonGrid, DEFAULT_TAIL_PROB};
use crate::intensity::{augment, FamilyRef, IntensityFamily};
use crate::kernel::{default_v_grid, Kernel, RowMeasure, DEFAULT_NV};
use crate::pi::Mode;
use crate::quadrature::{simpson_uniform, trapezoid, uniform_grid};

/// `b^{j,v}(s)` as `(j, v, s)`.
pub type RateFn = Arc<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;
/// `b^{(j,v),(k,0)}(s)` as `(j, v, k, s)`.
pub type LumpFn = Arc<dyn Fn(usize, f64, usize, f64) -> f64 + Send + Sync>;

/// Payment `amount` at `time` when in `state` with duration in
/// `[duration_lo, duration_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePayment {
    pub time: f64,
    pub state: usize,
    pub duration_lo: Option<f64>,
    pub duration_hi: Option<f64>,
    pub amount: f64,
}

impl DiscretePayment {
    fn covers_all_durations(&self) -> bool {
        self.duration_lo.is_none_or(|l| l <= 0.0) && self.duration_hi.is_none()
    }

    fn contains(&self, v: f64) -> bool {
        self.duration_lo.is_none_or(|l| v >= l) && self.duration_hi.is_none_or(|h| v <= h)
    }
}

#[derive(Clone)]
pub struct PaymentSpec {
    states: usize,
    horizon: f64,
    rate: Option<RateFn>,
    lump: Option<LumpFn>,
    discrete: Vec<DiscretePayment>,
    duration_independent: bool,
    initial_payment: f64,
}

impl fmt::Debug for PaymentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaymentSpec")
            .field("states", &self.states)
            .field("horizon", &self.horizon)
            .field("rate", &self.rate.is_some())
            .field("lump", &self.lump.is_some())
            .field("discrete", &self.discrete)
            .field("duration_independent", &self.duration_independent)
            .field("initial_payment", &self.initial_payment)
            .finish()
    }
}

impl PaymentSpec {
    /// No payments.
    pub fn new(states: usize, horizon: f64) -> Self {
        Self {
            states,
            horizon,
            rate: None,
            lump: None,
            discrete: Vec::new(),
            duration_independent: true,
            initial_payment: 0.0,
        }
    }

    pub fn with_rate(mut self, rate: impl Fn(usize, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.rate = Some(Arc::new(rate));
        self
    }

    pub fn with_lump(
        mut self,
        lump: impl Fn(usize, f64, usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.lump = Some(Arc::new(lump));
        self
    }

    pub fn with_discrete(mut self, p: DiscretePayment) -> Self {
        self.discrete.push(p);
        self
    }

    /// Declares whether rates and lumps ignore the duration argument. The
    /// closed-form duration integral is used when set.
    pub fn duration_independent(mut self, flag: bool) -> Self {
        self.duration_independent = flag;
        self
    }

    /// Payment `b0` at time 0, used only when solving for a premium.
    pub fn with_initial_payment(mut self, b0: f64) -> Self {
        self.initial_payment = b0;
        self
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_duration_independent(&self) -> bool {
        self.duration_independent
    }

    pub fn initial_payment(&self) -> f64 {
        self.initial_payment
    }

    pub fn discrete(&self) -> &[DiscretePayment] {
        &self.discrete
    }

    pub fn has_lumps(&self) -> bool {
        self.lump.is_some()
    }

    #[inline]
    pub fn rate(&self, j: usize, v: f64, s: f64) -> f64 {
        self.rate.as_ref().map_or(0.0, |f| f(j, v, s))
    }

    #[inline]
    pub fn lump(&self, j: usize, v: f64, k: usize, s: f64) -> f64 {
        if j == k {
            return 0.0;
        }
        self.lump.as_ref().map_or(0.0, |f| f(j, v, k, s))
    }

    /// `self + c * other`.
    pub fn affine(&self, other: &PaymentSpec, c: f64) -> Result<PaymentSpec> {
        if self.states != other.states {
            return Err(Error::DimensionMismatch(format!(
                "payment specs have {} and {} states",
                self.states, other.states
            )));
        }
        let (ra, rb) = (self.rate.clone(), other.rate.clone());
        let rate: Option<RateFn> = match (ra, rb) {
            (None, None) => None,
            (a, b) => Some(Arc::new(move |j, v, s| {
                a.as_ref().map_or(0.0, |f| f(j, v, s)) + c * b.as_ref().map_or(0.0, |f| f(j, v, s))
            })),
        };
        let (la, lb) = (self.lump.clone(), other.lump.clone());
        let lump: Option<LumpFn> = match (la, lb) {
            (None, None) => None,
            (a, b) => Some(Arc::new(move |j, v, k, s| {
                a.as_ref().map_or(0.0, |f| f(j, v, k, s))
                    + c * b.as_ref().map_or(0.0, |f| f(j, v, k, s))
            })),
        };
        let mut discrete = self.discrete.clone();
        discrete.extend(other.discrete.iter().map(|p| DiscretePayment {
            amount: c * p.amount,
            ..p.clone()
        }));
        Ok(PaymentSpec {
            states: self.states,
            horizon: self.horizon.max(other.horizon),
            rate,
            lump,
            discrete,
            duration_independent: self.duration_independent && other.duration_independent,
            initial_payment: self.initial_payment + c * other.initial_payment,
        })
    }

    /// Payments on the augmented state space for a start at `(t0, u0)`:
    /// "no reset yet" states see duration `u0 + v`, the others `v`, and
    /// time maps to `t0 + s`.
    pub fn augmented(&self, t0: f64, u0: f64) -> PaymentSpec {
        let j = self.states;
        let rate: Option<RateFn> = self.rate.clone().map(|f| -> RateFn {
            Arc::new(move |a: usize, v: f64, s: f64| {
                let shift = if a < j { u0 } else { 0.0 };
                f(a % j, v + shift, t0 + s)
            })
        });
        let lump: Option<LumpFn> = self.lump.clone().map(|f| -> LumpFn {
            Arc::new(move |a: usize, v: f64, b: usize, s: f64| {
                if b < j || a % j == b % j {
                    return 0.0;
                }
                let shift = if a < j { u0 } else { 0.0 };
                f(a % j, v + shift, b % j, t0 + s)
            })
        });
        let mut discrete = Vec::new();
        for p in &self.discrete {
            let time = p.time - t0;
            if time < 0.0 {
                continue;
            }
            discrete.push(DiscretePayment {
                time,
                state: p.state,
                duration_lo: p.duration_lo.map(|l| l - u0),
                duration_hi: p.duration_hi.map(|h| h - u0),
                amount: p.amount,
            });
            discrete.push(DiscretePayment {
                time,
                state: p.state + j,
                ..p.clone()
            });
        }
        PaymentSpec {
            states: 2 * j,
            horizon: self.horizon - t0,
            rate,
            lump,
            discrete,
            duration_independent: self.duration_independent,
            initial_payment: self.initial_payment,
        }
    }

    /// Samples rates and lumps at two durations and reports the largest
    /// disagreement (zero for a truthful duration-independence flag).
    pub fn duration_dependence(&self, s_values: &[f64], v_values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &s in s_values {
            for &v in v_values {
                for a in 0..self.states {
                    worst = worst.max((self.rate(a, v, s) - self.rate(a, 0.0, s)).abs());
                    for b in 0..self.states {
                        worst = worst.max((self.lump(a, v, b, s) - self.lump(a, 0.0, b, s)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Deterministic short rate `r(t) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscountCurve {
    Constant(f64),
    /// `rates[k]` applies on `[breaks[k-1], breaks[k])` with `breaks[-1] =
    /// 0`; the last rate extends to infinity.
    PiecewiseConstant { breaks: Vec<f64>, rates: Vec<f64> },
}

impl DiscountCurve {
    pub fn zero() -> Self {
        DiscountCurve::Constant(0.0)
    }

    pub fn piecewise(breaks: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != breaks.len() + 1 {
            return Err(Error::InvalidArgument(
                "piecewise discount needs one more rate than breaks".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.first().is_some_and(|&b| b <= 0.0)
        {
            return Err(Error::InvalidArgument("discount breaks must be positive and increasing".into()));
        }
        if rates.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::InvalidArgument("discount rates must be >= 0".into()));
        }
        Ok(DiscountCurve::PiecewiseConstant { breaks, rates })
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            DiscountCurve::Constant(r) => *r,
            DiscountCurve::PiecewiseConstant { breaks, rates } => {
                rates[breaks.partition_point(|&b| b <= t)]
            }
        }
    }

    /// `int_0^s r`.
    pub fn cumulative(&self, s: f64) -> f64 {
        match self {
            DiscountCurve::Constant(r) => r * s,
            DiscountCurve::PiecewiseConstant { breaks, rates } => {
                let mut acc = 0.0;
                let mut prev = 0.0;
                for (k, &b) in breaks.iter().enumerate() {
                    if s <= b {
                        return acc + rates[k] * (s - prev);
                    }
                    acc += rates[k] * (b - prev);
                    prev = b;
                }
                acc + rates[breaks.len()] * (s - prev)
            }
        }
    }

    /// `exp(-int_t^{t+s} r)`.
    pub fn factor_from(&self, t: f64, s: f64) -> f64 {
        (-(self.cumulative(t + s) - self.cumulative(t))).exp()
    }

    pub fn factor(&self, s: f64) -> f64 {
        self.factor_from(0.0, s)
    }
}

/// Engine settings for building kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub gamma: f64,
    pub mode: Mode,
    /// Grid seed; used in conditional mode only.
    pub seed: u64,
    pub tail_prob: f64,
    pub n_v: usize,
    pub n_s: usize,
}

impl EngineSettings {
    pub fn new(gamma: f64, mode: Mode, seed: u64) -> Self {
        Self {
            gamma,
            mode,
            seed,
            tail_prob: DEFAULT_TAIL_PROB,
            n_v: DEFAULT_NV,
            n_s: 200,
        }
    }

    pub fn kernel(&self, family: &dyn IntensityFamily, horizon: f64) -> Result<Kernel> {
        match self.mode {
            Mode::Unconditional => Kernel::build(
                family,
                self.gamma,
                Mode::Unconditional,
                None,
                horizon,
                self.tail_prob,
            ),
            Mode::Conditional => {
                let grid = PoissonGrid::sample(self.gamma, horizon.max(f64::MIN_POSITIVE), self.tail_prob, self.seed)?;
                Kernel::build(
                    family,
                    self.gamma,
                    Mode::Conditional,
                    Some(&grid),
                    horizon,
                    self.tail_prob,
                )
            }
        }
    }

    /// `n_s + 1` equally spaced points on `[0, horizon]`.
    pub fn s_grid(&self, horizon: f64) -> Vec<f64> {
        uniform_grid(0.0, horizon, self.n_s.max(1))
    }
}

/// Expected discrete payment at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct CashflowCurve {
    pub i: usize,
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub point_masses: Vec<PointMass>,
    pub gamma: f64,
    pub mode: Mode,
    pub seed: Option<u64>,
}

/// `c_i(s)` at one time from a row measure.
fn cashflow_at(row: &RowMeasure, payments: &PaymentSpec) -> f64 {
    let n = row.states;
    let s = row.s;
    let i = row.i;
    let mut total = row.atom * payments.rate(i, s, s);
    if row.has_jumps() {
        for k in 0..n {
            if k != i && row.jump_atom[k] != 0.0 {
                total += row.jump_atom[k] * payments.lump(i, s, k, s);
            }
        }
    }
    if payments.is_duration_independent() || s == 0.0 {
        for j in 0..n {
            total += row.integrated[j] * payments.rate(j, 0.0, s);
        }
        if row.has_jumps() {
            for j in 0..n {
                for k in 0..n {
                    let m = row.jump_integrated[j * n + k];
                    if m != 0.0 {
                        total += m * payments.lump(j, 0.0, k, s);
                    }
                }
            }
        }
    } else {
        let y: Vec<f64> = row
            .v_grid
            .iter()
            .enumerate()
            .map(|(a, &v)| {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += row.density[a][j] * payments.rate(j, v, s);
                }
                if row.has_jumps() {
                    for j in 0..n {
                        for k in 0..n {
                            let m = row.jump_density[a][j * n + k];
                            if m != 0.0 {
                                acc += m * payments.lump(j, v, k, s);
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        total += trapezoid(&row.v_grid, &y);
    }
    total
}

fn expected_discrete(
    kernel: &Kernel,
    p: &DiscretePayment,
    i: usize,
    n_v: usize,
) -> Result<f64> {
    let tau = p.time;
    if p.covers_all_durations() {
        let row = kernel.row(tau, i, &[], false)?;
        let mut mass = row.integrated[p.state];
        if p.state == i {
            mass += row.atom;
        }
        return Ok(mass * p.amount);
    }
    let lo = p.duration_lo.unwrap_or(0.0).max(0.0);
    let hi = p.duration_hi.unwrap_or(tau).min(tau);
    let mut mass = 0.0;
    if hi > lo {
        let grid = uniform_grid(lo, hi, n_v.max(1));
        let row = kernel.row(tau, i, &grid, false)?;
        let y: Vec<f64> = row.density.iter().map(|d| d[p.state]).collect();
        mass += trapezoid(&grid, &y);
    }
    if p.state == i && p.contains(tau) {
        mass += kernel.row(tau, i, &[], false)?.atom;
    }
    Ok(mass * p.amount)
}

/// Expected cashflow `c_i(s)` on `s_grid`.
pub fn cashflow(
    kernel: &Kernel,
    payments: &PaymentSpec,
    i: usize,
    s_grid: &[f64],
    n_v: usize,
) -> Result<CashflowCurve> {
    if payments.states() != kernel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "payments cover {} states, kernel has {}",
            payments.states(),
            kernel.dim()
        )));
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("s grid must increase".into()));
    }
    let with_jumps = payments.has_lumps();
    let values = s_grid
        .par_iter()
        .map(|&s| {
            let v_grid = if payments.is_duration_independent() {
                Vec::new()
            } else {
                default_v_grid(s, n_v)
            };
            let row = kernel.row(s, i, &v_grid, with_jumps)?;
            let c = cashflow_at(&row, payments);
            if !c.is_finite() {
                return Err(Error::Payment(format!("non-finite cashflow at s = {s}")));
            }
            Ok(c)
        })
        .collect::<Result<Vec<f64>>>()?;
    let point_masses = payments
        .discrete()
        .iter()
        .map(|p| {
            Ok(PointMass {
                time: p.time,
                value: expected_discrete(kernel, p, i, n_v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CashflowCurve {
        i,
        s_grid: s_grid.to_vec(),
        values,
        point_masses,
        gamma: kernel.gamma(),
        mode: kernel.mode(),
        seed: kernel.seed(),
    })
}

fn is_uniform(x: &[f64]) -> bool {
    if x.len() < 3 {
        return true;
    }
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    x.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300))
}

/// Discounted integral of a cashflow curve plus its discrete payments.
/// `t0` offsets the discount curve.
pub fn discounted_value(curve: &CashflowCurve, discount: &DiscountCurve, t0: f64) -> f64 {
    let y: Vec<f64> = curve
        .s_grid
        .iter()
        .zip(&curve.values)
        .map(|(&s, &c)| discount.factor_from(t0, s) * c)
        .collect();
    let x = &curve.s_grid;
    let continuous = if x.len() >= 2 && is_uniform(x) {
        simpson_uniform((x[x.len() - 1] - x[0]) / (x.len() - 1) as f64, &y)
    } else {
        trapezoid(x, &y)
    };
    let discrete: f64 = curve
        .point_masses
        .iter()
        .map(|p| discount.factor_from(t0, p.time) * p.value)
        .sum();
    continuous + discrete
}

#[derive(Debug, Clone)]
pub struct Reserve {
    pub value: f64,
    pub cashflow: CashflowCurve,
}

/// `V_i` as the discounted integral of the cashflow over `s_grid` (which
/// should span `[0, T]`).
pub fn reserve(
    kernel: &Kernel,
    payments: &PaymentSpec,
    discount: &DiscountCurve,
    i: usize,
    s_grid: &[f64],
    n_v: usize,
) -> Result<Reserve> {
    let curve = cashflow(kernel, payments, i, s_grid, n_v)?;
    Ok(Reserve {
        value: discounted_value(&curve, discount, 0.0),
        cashflow: curve,
    })
}

/// Cashflow for a start in state `i` with duration `u` at time `t`, via
/// the augmented family. The curve is indexed by time since `t`.
pub fn cashflow_at_start(
    family: &FamilyRef,
    payments: &PaymentSpec,
    t: f64,
    i: usize,
    u: f64,
    settings: &EngineSettings,
) -> Result<CashflowCurve> {
    let horizon = payments.horizon();
    if !(t >= 0.0) || t > horizon {
        return Err(Error::InvalidArgument(format!("start time {t} outside [0, {horizon}]")));
    }
    if !(u >= 0.0) {
        return Err(Error::InvalidArgument(format!("start duration must be >= 0, got {u}")));
    }
    let aug = augment(family.clone(), t, u)?;
    let pay = payments.augmented(t, u);
    let rest = horizon - t;
    let kernel = settings.kernel(&aug, rest)?;
    cashflow(&kernel, &pay, aug.initial_index(i), &settings.s_grid(rest), settings.n_v)
}

/// `V(t; i, u)`.
pub fn reserve_at(
    family: &FamilyRef,
    payments: &PaymentSpec,
    discount: &DiscountCurve,
    t: f64,
    i: usize,
    u: f64,
    settings: &EngineSettings,
) -> Result<f64> {
    let curve = cashflow_at_start(family, payments, t, i, u, settings)?;
    Ok(discounted_value(&curve, discount, t))
}

/// Solves `V(c) + b0(c) = 0` for the coefficient `c` of `premiums` in
/// `benefits + c * premiums`, from evaluations at `c = 0` and `c = 1`.
pub fn premium_solve<F>(benefits: &PaymentSpec, premiums: &PaymentSpec, value: F) -> Result<f64>
where
    F: Fn(&PaymentSpec) -> Result<f64>,
{
    let at = |c: f64| -> Result<f64> {
        let spec = benefits.affine(premiums, c)?;
        Ok(value(&spec)? + spec.initial_payment())
    };
    let v0 = at(0.0)?;
    let v1 = at(1.0)?;
    let slope = v1 - v0;
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::ZeroSensitivity);
    }
    Ok(-v0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::ConstantFamily;
    use crate::linalg::Mat;

    fn absorbing(mu: f64) -> Arc<ConstantFamily> {
        Arc::new(ConstantFamily::new(Mat::from_rows(&[vec![-mu, mu], vec![0.0, 0.0]])).unwrap())
    }

    #[test]
    fn zero_payments_give_zero() {
        let f = absorbing(1.0);
        let k = EngineSettings::new(10.0, Mode::Unconditional, 0).kernel(f.as_ref(), 1.0).unwrap();
        let p = PaymentSpec::new(2, 1.0);
        let r = reserve(&k, &p, &DiscountCurve::Constant(0.03), 0, &uniform_grid(0.0, 1.0, 20), 50)
            .unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.cashflow.values.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_state_unit_rate() {
        let f = ConstantFamily::with_gamma0(Mat::from_rows(&[vec![0.0]]), 1.0).unwrap();
        let k = EngineSettings::new(4.0, Mode::Unconditional, 0).kernel(&f, 2.0).unwrap();
        let p = PaymentSpec::new(1, 2.0).with_rate(|_, _, _| 1.0);
        let c = cashflow(&k, &p, 0, &uniform_grid(0.0, 2.0, 8), 20).unwrap();
        for (s, v) in c.s_grid.iter().zip(c.values) {
            assert!((v - 1.0).abs() <= k.truncation_mass(*s) + 1e-12);
        }
    }

    #[test]
    fn lump_on_absorption() {
        let f = absorbing(1.0);
        let k = EngineSettings::new(100.0, Mode::Unconditional, 0).kernel(f.as_ref(), 1.0).unwrap();
        let p = PaymentSpec::new(2, 1.0).with_lump(|j, _, k, _| if j == 0 && k == 1 { 1.0 } else { 0.0 });
        let r = reserve(&k, &p, &DiscountCurve::zero(), 0, &uniform_grid(0.0, 1.0, 200), 50).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        assert!((r.value - want).abs() < 2e-3, "{}", r.value);
    }

    #[test]
    fn piecewise_discount_is_exact() {
        let d = DiscountCurve::piecewise(vec![1.0, 3.0], vec![0.01, 0.02, 0.05]).unwrap();
        assert!((d.cumulative(0.5) - 0.005).abs() < 1e-15);
        assert!((d.cumulative(2.0) - (0.01 + 0.02)).abs() < 1e-15);
        assert!((d.cumulative(4.0) - (0.01 + 0.04 + 0.05)).abs() < 1e-15);
        assert_eq!(d.rate(3.0), 0.05);
        assert!(DiscountCurve::piecewise(vec![1.0], vec![-0.1, 0.0]).is_err());
    }

    #[test]
    fn premium_zero_when_no_benefits() {
        let b = PaymentSpec::new(2, 1.0);
        let p = PaymentSpec::new(2, 1.0).with_rate(|j, _, _| if j == 0 { -1.0 } else { 0.0 });
        let c = premium_solve(&b, &p, |spec| Ok(spec.rate(0, 0.0, 0.5))).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn premium_requires_sensitivity() {
        let b = PaymentSpec::new(2, 1.0).with_rate(|_, _, _| 1.0);
        let p = PaymentSpec::new(2, 1.0);
        assert!(matches!(
            premium_solve(&b, &p, |spec| Ok(spec.rate(0, 0.0, 0.5))),
            Err(Error::ZeroSensitivity)
        ));
    }

    #[test]
    fn augmented_payments_shift_duration() {
        let p = PaymentSpec::new(2, 5.0)
            .with_rate(|j, v, s| (j as f64 + 1.0) * (v + 10.0 * s))
            .duration_independent(false);
        let a = p.augmented(1.0, 0.5);
        assert_eq!(a.states(), 4);
        assert_eq!(a.horizon(), 4.0);
        assert_eq!(a.rate(1, 0.25, 2.0), p.rate(1, 0.75, 3.0));
        assert_eq!(a.rate(3, 0.25, 2.0), p.rate(1, 0.25, 3.0));
    }
}
