//! Three-state disability model: active, disabled, dead. Time is age in
//! years; duration is time since the last jump.

use serde::{Deserialize, Serialize};

use super::{fill_diagonal, IntensityFamily, NaturalCubicSpline};
use crate::error::{Error, Result};

pub const ACTIVE: usize = 0;
pub const DISABLED: usize = 1;
pub const DEAD: usize = 2;

/// Active to disabled: `exp(poly(age))` with age clamped to a fitting range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Incidence {
    pub coeffs: Vec<f64>,
    pub age_lo: f64,
    pub age_hi: f64,
}

/// Disabled to active: `exp(phi_k + beta_k * age + theta_k * u)` on the
/// duration bands `[0, b1)`, `[b1, b2)`, `[b2, b3)`, `[b3, inf)` (indexed
/// 3, 2, 1, 0 respectively; band 0 has no duration slope).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recovery {
    pub phi: [f64; 4],
    pub beta: [f64; 4],
    pub theta: [f64; 4],
    pub breakpoints: [f64; 3],
}

/// Disabled to dead: `exp(alpha1 + eta1 * age + zeta1 * u)` for
/// `u < breakpoint`, `exp(alpha2 + eta2 * age)` after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisabledMortality {
    pub alpha1: f64,
    pub eta1: f64,
    pub zeta1: f64,
    pub alpha2: f64,
    pub eta2: f64,
    pub breakpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisabilityRates {
    pub incidence: Incidence,
    /// Active mortality: log-rate knots for a natural cubic spline in age.
    pub mortality_ages: Vec<f64>,
    pub mortality_log_rates: Vec<f64>,
    pub recovery: Recovery,
    pub disabled_mortality: DisabledMortality,
    pub gamma0: f64,
    pub lipschitz: f64,
}

impl DisabilityRates {
    /// The parameter set shipped with the crate.
    pub fn shipped() -> Self {
        Self {
            incidence: Incidence {
                coeffs: vec![
                    -14.4086648,
                    1.01746356,
                    -4.96094323e-2,
                    1.16978546e-3,
                    -1.28500307e-5,
                    5.34394311e-8,
                ],
                age_lo: 25.0,
                age_hi: 67.0,
            },
            mortality_ages: vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
            mortality_log_rates: vec![-7.9, -7.5, -6.6, -5.7, -4.8, -3.9, -2.95, -2.0, -1.2],
            recovery: Recovery {
                phi: [-0.857, 0.393, 1.093, 1.3],
                beta: [-0.015, -0.015, -0.015, -0.015],
                theta: [0.0, -0.25, -0.6, -1.5],
                breakpoints: [0.23, 2.0, 5.0],
            },
            disabled_mortality: DisabledMortality {
                alpha1: -6.0,
                eta1: 0.05,
                zeta1: -0.1,
                alpha2: -6.5,
                eta2: 0.05,
                breakpoint: 5.0,
            },
            gamma0: 8.0,
            lipschitz: 12.0,
        }
    }
}

impl Default for DisabilityRates {
    fn default() -> Self {
        Self::shipped()
    }
}

#[derive(Debug, Clone)]
pub struct DisabilityFamily {
    rates: DisabilityRates,
    mortality: NaturalCubicSpline,
}

impl DisabilityFamily {
    pub fn new(rates: DisabilityRates) -> Result<Self> {
        let b = rates.recovery.breakpoints;
        if !(0.0 < b[0] && b[0] < b[1] && b[1] < b[2]) {
            return Err(Error::InvalidFamily(
                "recovery breakpoints must be positive and increasing".into(),
            ));
        }
        if !(rates.incidence.age_lo <= rates.incidence.age_hi) {
            return Err(Error::InvalidFamily("incidence age range is empty".into()));
        }
        if !(rates.gamma0 > 0.0) {
            return Err(Error::InvalidFamily("gamma0 must be > 0".into()));
        }
        let mortality = NaturalCubicSpline::new(
            rates.mortality_ages.clone(),
            rates.mortality_log_rates.clone(),
        )
        .map_err(|e| Error::InvalidFamily(format!("mortality spline: {e}")))?;
        Ok(Self { rates, mortality })
    }

    pub fn shipped() -> Self {
        Self::new(DisabilityRates::shipped()).expect("shipped parameters are valid")
    }

    pub fn rates(&self) -> &DisabilityRates {
        &self.rates
    }

    pub fn incidence(&self, age: f64) -> f64 {
        let inc = &self.rates.incidence;
        let x = age.clamp(inc.age_lo, inc.age_hi);
        inc.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c).exp()
    }

    pub fn active_mortality(&self, age: f64) -> f64 {
        self.mortality.eval(age).exp()
    }

    pub fn recovery(&self, age: f64, u: f64) -> f64 {
        let r = &self.rates.recovery;
        let b = r.breakpoints;
        let k = if u < b[0] {
            3
        } else if u < b[1] {
            2
        } else if u < b[2] {
            1
        } else {
            0
        };
        (r.phi[k] + r.beta[k] * age + r.theta[k] * u).exp()
    }

    pub fn disabled_mortality(&self, age: f64, u: f64) -> f64 {
        let m = &self.rates.disabled_mortality;
        if u < m.breakpoint {
            (m.alpha1 + m.eta1 * age + m.zeta1 * u).exp()
        } else {
            (m.alpha2 + m.eta2 * age).exp()
        }
    }
}

impl IntensityFamily for DisabilityFamily {
    fn states(&self) -> usize {
        3
    }

    fn eval_into(&self, s: f64, v: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[ACTIVE * 3 + DISABLED] = self.incidence(s);
        out[ACTIVE * 3 + DEAD] = self.active_mortality(s);
        out[DISABLED * 3 + ACTIVE] = self.recovery(s, v);
        out[DISABLED * 3 + DEAD] = self.disabled_mortality(s, v);
        fill_diagonal(out, 3);
    }

    fn gamma0(&self) -> f64 {
        self.rates.gamma0
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.rates.lipschitz)
    }
}
