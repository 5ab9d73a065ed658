//! Restricted expression vocabulary for config-defined payment functions
//! and intensities: sums of scaled products of indicators, exponentials
//! and (optionally clamped) polynomials in time `s` and duration `v`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    /// Time.
    S,
    /// Duration since the last jump.
    V,
}

impl Var {
    #[inline]
    fn pick(self, s: f64, v: f64) -> f64 {
        match self {
            Var::S => s,
            Var::V => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Factor {
    /// `1{lo <= x <= hi}`; a missing bound is unbounded.
    Indicator {
        var: Var,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
    /// `exp(intercept + s_coef * s + v_coef * v)`.
    Exp {
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        s_coef: f64,
        #[serde(default)]
        v_coef: f64,
    },
    /// `sum_k coeffs[k] * x^k` with `x` clamped to `[clamp_lo, clamp_hi]`.
    Poly {
        var: Var,
        coeffs: Vec<f64>,
        #[serde(default)]
        clamp_lo: Option<f64>,
        #[serde(default)]
        clamp_hi: Option<f64>,
    },
}

impl Factor {
    pub fn eval(&self, s: f64, v: f64) -> f64 {
        match self {
            Factor::Indicator { var, lo, hi } => {
                let x = var.pick(s, v);
                let above = lo.is_none_or(|l| x >= l);
                let below = hi.is_none_or(|h| x <= h);
                if above && below {
                    1.0
                } else {
                    0.0
                }
            }
            Factor::Exp {
                intercept,
                s_coef,
                v_coef,
            } => (intercept + s_coef * s + v_coef * v).exp(),
            Factor::Poly {
                var,
                coeffs,
                clamp_lo,
                clamp_hi,
            } => {
                let mut x = var.pick(s, v);
                if let Some(l) = clamp_lo {
                    x = x.max(*l);
                }
                if let Some(h) = clamp_hi {
                    x = x.min(*h);
                }
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
        }
    }

    pub fn uses_duration(&self) -> bool {
        match self {
            Factor::Indicator { var, .. } | Factor::Poly { var, .. } => *var == Var::V,
            Factor::Exp { v_coef, .. } => *v_coef != 0.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn eval(&self, s: f64, v: f64) -> f64 {
        let mut acc = self.scale;
        for f in &self.factors {
            if acc == 0.0 {
                return 0.0;
            }
            acc *= f.eval(s, v);
        }
        acc
    }
}

/// Sum of terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Expr(pub Vec<Term>);

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr(vec![Term {
            scale: c,
            factors: vec![],
        }])
    }

    pub fn eval(&self, s: f64, v: f64) -> f64 {
        self.0.iter().map(|t| t.eval(s, v)).sum()
    }

    pub fn uses_duration(&self) -> bool {
        self.0
            .iter()
            .any(|t| t.factors.iter().any(Factor::uses_duration))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| t.scale == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let src = r#"
            terms = [
              { scale = 0.01, factors = [
                  { kind = "indicator", var = "s", lo = 1.0, hi = 4.0 },
                  { kind = "indicator", var = "v", lo = 0.1 },
                  { kind = "exp", s_coef = -0.2, v_coef = 0.2 },
              ] },
            ]
        "#;
        #[derive(Deserialize)]
        struct W {
            terms: Expr,
        }
        let w: W = toml::from_str(src).unwrap();
        let e = w.terms;
        assert!(e.uses_duration());
        let got = e.eval(2.0, 0.5);
        let want = 0.01 * (-(2.0 - 0.5) / 5.0f64).exp();
        assert!((got - want).abs() < 1e-16);
        assert_eq!(e.eval(0.5, 0.5), 0.0);
        assert_eq!(e.eval(2.0, 0.05), 0.0);
    }

    #[test]
    fn clamped_poly() {
        let f = Factor::Poly {
            var: Var::V,
            coeffs: vec![0.0, 1.0],
            clamp_lo: None,
            clamp_hi: Some(1.0),
        };
        assert_eq!(f.eval(0.0, 0.4), 0.4);
        assert_eq!(f.eval(0.0, 3.0), 1.0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let src = r#"kind = "exp"
intercept = 1.0
bogus = 2.0"#;
        assert!(toml::from_str::<Factor>(src).is_err());
    }
}
