//! TOML run configuration. Unknown keys are rejected; states are 1-based
//! in the file and 0-based in code.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::DEFAULT_TAIL_PROB;
use crate::intensity::{
    ConstantFamily, DisabilityFamily, DisabilityRates, ExpressionFamily, FamilyRef, RateEntry,
    Shifted,
};
use crate::kernel::DEFAULT_NV;
use crate::linalg::Mat;
use crate::pi::Mode;
use crate::quadrature::uniform_grid;
use crate::valuation::{DiscountCurve, DiscretePayment, EngineSettings, PaymentSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub payments: PaymentsConfig,
    #[serde(default)]
    pub discount: DiscountConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyConfig,
    /// Family time at policy time 0.
    #[serde(default)]
    pub start_time: f64,
    /// Initial states for cashflows and reserves (1-based).
    #[serde(default = "default_initial_states")]
    pub initial_states: Vec<usize>,
    /// Duration already spent in the initial state at policy time 0.
    #[serde(default)]
    pub initial_duration: f64,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
}

fn default_initial_states() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Constant {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        gamma0: Option<f64>,
    },
    Disability {
        #[serde(default)]
        rates: Option<DisabilityRates>,
    },
    Expression {
        states: usize,
        gamma0: f64,
        #[serde(default)]
        lipschitz: Option<f64>,
        rates: Vec<RateConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub from: usize,
    pub to: usize,
    pub value: Expr,
}

/// Sampling grid on the family's own clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default = "default_audit_pairs")]
    pub lipschitz_pairs: usize,
}

fn default_audit_pairs() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRate {
    pub state: usize,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpConfig {
    pub from: usize,
    pub to: usize,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub time: f64,
    pub state: usize,
    #[serde(default)]
    pub duration_lo: Option<f64>,
    #[serde(default)]
    pub duration_hi: Option<f64>,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaymentsConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Inferred from the expressions when absent.
    #[serde(default)]
    pub duration_independent: Option<bool>,
    #[serde(default)]
    pub initial_payment: f64,
    #[serde(default)]
    pub rate: Vec<StateRate>,
    #[serde(default)]
    pub lump: Vec<LumpConfig>,
    #[serde(default)]
    pub discrete: Vec<DiscreteConfig>,
    /// Premium stream whose coefficient is solved for by `reserve`.
    #[serde(default)]
    pub premium: Option<PremiumConfig>,
}

fn default_horizon() -> f64 {
    1.0
}

impl Default for PaymentsConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            duration_independent: None,
            initial_payment: 0.0,
            rate: Vec::new(),
            lump: Vec::new(),
            discrete: Vec::new(),
            premium: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumConfig {
    #[serde(default)]
    pub initial_payment: f64,
    #[serde(default)]
    pub rate: Vec<StateRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountConfig {
    Constant { rate: f64 },
    Piecewise { breaks: Vec<f64>, rates: Vec<f64> },
}

impl Default for DiscountConfig {
    fn default() -> Self {
        DiscountConfig::Constant { rate: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Conditional,
    Unconditional,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::Conditional => vec![Mode::Conditional],
            ModeSelection::Unconditional => vec![Mode::Unconditional],
            ModeSelection::Both => vec![Mode::Conditional, Mode::Unconditional],
        }
    }
}

impl std::str::FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(ModeSelection::Conditional),
            "unconditional" => Ok(ModeSelection::Unconditional),
            "both" => Ok(ModeSelection::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode '{other}' (expected conditional, unconditional or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_gammas")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: ModeSelection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tail")]
    pub tail_prob: f64,
    #[serde(default = "default_ns")]
    pub n_s: usize,
    #[serde(default = "default_nv")]
    pub n_v: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Evaluation times for `transition`.
    #[serde(default = "default_times")]
    pub transition_times: Vec<f64>,
}

fn default_gammas() -> Vec<f64> {
    vec![30.0]
}
fn default_mode() -> ModeSelection {
    ModeSelection::Unconditional
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_tail() -> f64 {
    DEFAULT_TAIL_PROB
}
fn default_ns() -> usize {
    200
}
fn default_nv() -> usize {
    DEFAULT_NV
}
fn default_eps() -> f64 {
    0.1
}
fn default_times() -> Vec<f64> {
    vec![1.0]
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            gamma: default_gammas(),
            mode: default_mode(),
            seeds: default_seeds(),
            tail_prob: default_tail(),
            n_s: default_ns(),
            n_v: default_nv(),
            epsilon: default_eps(),
            transition_times: default_times(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_mc_seeds")]
    pub seeds: Vec<u64>,
}

fn default_paths() -> usize {
    100_000
}
fn default_mc_seeds() -> Vec<u64> {
    vec![7]
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            seeds: default_mc_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Time at which conditional and unconditional measures are compared.
    #[serde(default = "default_conv_time")]
    pub time: f64,
    /// Exponent `q` of the grid-deviation envelope.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_conv_time() -> f64 {
    1.0
}
fn default_q() -> f64 {
    2.0
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            time: default_conv_time(),
            q: default_q(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

fn state_index(label: usize, states: usize, what: &str) -> Result<usize> {
    if label == 0 || label > states {
        return Err(Error::Config(format!(
            "{what}: state {label} outside 1..={states}"
        )));
    }
    Ok(label - 1)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The parsed configuration with every default filled in.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn states(&self) -> usize {
        match &self.model.family {
            FamilyConfig::Constant { matrix, .. } => matrix.len(),
            FamilyConfig::Disability { .. } => 3,
            FamilyConfig::Expression { states, .. } => *states,
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.states();
        if n == 0 {
            return Err(Error::Config("model has no states".into()));
        }
        for &i in &self.model.initial_states {
            state_index(i, n, "model.initial_states")?;
        }
        if self.model.initial_states.is_empty() {
            return Err(Error::Config("model.initial_states is empty".into()));
        }
        if !(self.model.start_time >= 0.0) || !(self.model.initial_duration >= 0.0) {
            return Err(Error::Config(
                "model.start_time and model.initial_duration must be >= 0".into(),
            ));
        }
        if !(self.payments.horizon > 0.0) {
            return Err(Error::Config("payments.horizon must be > 0".into()));
        }
        for r in &self.payments.rate {
            state_index(r.state, n, "payments.rate")?;
        }
        for l in &self.payments.lump {
            state_index(l.from, n, "payments.lump")?;
            state_index(l.to, n, "payments.lump")?;
        }
        for d in &self.payments.discrete {
            state_index(d.state, n, "payments.discrete")?;
            if !(d.time >= 0.0 && d.time <= self.payments.horizon) {
                return Err(Error::Config(format!(
                    "payments.discrete: time {} outside [0, horizon]",
                    d.time
                )));
            }
        }
        if let Some(p) = &self.payments.premium {
            for r in &p.rate {
                state_index(r.state, n, "payments.premium.rate")?;
            }
        }
        let e = &self.engine;
        if e.gamma.is_empty() || e.gamma.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Config("engine.gamma must be a non-empty list of positive rates".into()));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("engine.seeds is empty".into()));
        }
        if !(e.tail_prob > 0.0 && e.tail_prob < 1.0) {
            return Err(Error::Config("engine.tail_prob must lie in (0, 1)".into()));
        }
        if e.n_s == 0 || e.n_v == 0 {
            return Err(Error::Config("engine.n_s and engine.n_v must be >= 1".into()));
        }
        if !(e.epsilon > 0.0 && e.epsilon < 1.0) {
            return Err(Error::Config("engine.epsilon must lie in (0, 1)".into()));
        }
        if e
            .transition_times
            .iter()
            .any(|&s| !(s >= 0.0 && s <= self.payments.horizon))
        {
            return Err(Error::Config(
                "engine.transition_times must lie in [0, payments.horizon]".into(),
            ));
        }
        if self.mc.n_paths == 0 || self.mc.seeds.is_empty() {
            return Err(Error::Config("mc.n_paths and mc.seeds must be non-empty".into()));
        }
        let c = &self.convergence;
        if !(c.time > 0.0 && c.time <= self.payments.horizon) {
            return Err(Error::Config("convergence.time must lie in (0, payments.horizon]".into()));
        }
        if self.output.formats.iter().any(|f| f != "csv") {
            return Err(Error::Config("output.formats supports only \"csv\"".into()));
        }
        if let DiscountConfig::Piecewise { breaks, rates } = &self.discount {
            DiscountCurve::piecewise(breaks.clone(), rates.clone())
                .map_err(|e| Error::Config(format!("discount: {e}")))?;
        }
        Ok(())
    }

    /// The family on its own clock.
    pub fn base_family(&self) -> Result<FamilyRef> {
        Ok(match &self.model.family {
            FamilyConfig::Constant { matrix, gamma0 } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("model.family.matrix must be square".into()));
                }
                let m = Mat::from_rows(matrix);
                Arc::new(match gamma0 {
                    Some(g) => ConstantFamily::with_gamma0(m, *g)?,
                    None => ConstantFamily::new(m)?,
                })
            }
            FamilyConfig::Disability { rates } => Arc::new(DisabilityFamily::new(
                rates.clone().unwrap_or_else(DisabilityRates::shipped),
            )?),
            FamilyConfig::Expression {
                states,
                gamma0,
                lipschitz,
                rates,
            } => {
                let entries = rates
                    .iter()
                    .map(|r| {
                        Ok(RateEntry {
                            from: state_index(r.from, *states, "model.family.rates")?,
                            to: state_index(r.to, *states, "model.family.rates")?,
                            rate: r.value.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(ExpressionFamily::new(*states, entries, *gamma0, *lipschitz)?)
            }
        })
    }

    /// The family on the policy clock (time 0 at `start_time`).
    pub fn family(&self) -> Result<FamilyRef> {
        let base = self.base_family()?;
        if self.model.start_time == 0.0 {
            Ok(base)
        } else {
            Ok(Arc::new(Shifted::new(base, self.model.start_time)))
        }
    }

    /// `(s, v)` validation points on the family's own clock.
    pub fn validation_grid(&self) -> Vec<(f64, f64)> {
        let (s, v) = match &self.model.validation {
            Some(g) => (g.s.clone(), g.v.clone()),
            None => {
                let t0 = self.model.start_time;
                let t = self.payments.horizon;
                (
                    uniform_grid(t0, t0 + t, 20),
                    uniform_grid(0.0, t + self.model.initial_duration, 20),
                )
            }
        };
        crate::intensity::product_grid(&s, &v)
    }

    pub fn payments(&self) -> Result<PaymentSpec> {
        let p = &self.payments;
        let mut spec = rate_spec(self.states(), p.horizon, &p.rate, p.initial_payment);
        if !p.lump.is_empty() {
            let table: Vec<(usize, usize, Expr)> = p
                .lump
                .iter()
                .map(|l| (l.from - 1, l.to - 1, l.value.clone()))
                .collect();
            spec = spec.with_lump(move |j, v, k, s| {
                table
                    .iter()
                    .filter(|(a, b, _)| *a == j && *b == k)
                    .map(|(_, _, e)| e.eval(s, v))
                    .sum()
            });
        }
        for d in &p.discrete {
            spec = spec.with_discrete(DiscretePayment {
                time: d.time,
                state: d.state - 1,
                duration_lo: d.duration_lo,
                duration_hi: d.duration_hi,
                amount: d.amount,
            });
        }
        let uses_duration = p.rate.iter().any(|r| r.value.uses_duration())
            || p.lump.iter().any(|l| l.value.uses_duration());
        let flag = p.duration_independent.unwrap_or(!uses_duration);
        Ok(spec.duration_independent(flag))
    }

    /// Premium stream, when configured.
    pub fn premiums(&self) -> Option<PaymentSpec> {
        let p = self.payments.premium.as_ref()?;
        let spec = rate_spec(self.states(), self.payments.horizon, &p.rate, p.initial_payment);
        let uses_duration = p.rate.iter().any(|r| r.value.uses_duration());
        Some(spec.duration_independent(!uses_duration))
    }

    pub fn discount(&self) -> Result<DiscountCurve> {
        match &self.discount {
            DiscountConfig::Constant { rate } => {
                if !(*rate >= 0.0) {
                    return Err(Error::Config("discount rate must be >= 0".into()));
                }
                Ok(DiscountCurve::Constant(*rate))
            }
            DiscountConfig::Piecewise { breaks, rates } => {
                DiscountCurve::piecewise(breaks.clone(), rates.clone())
            }
        }
    }

    pub fn engine_settings(&self, gamma: f64, mode: Mode, seed: u64) -> EngineSettings {
        EngineSettings {
            gamma,
            mode,
            seed,
            tail_prob: self.engine.tail_prob,
            n_v: self.engine.n_v,
            n_s: self.engine.n_s,
        }
    }

    /// Initial states, 0-based.
    pub fn initial_states(&self) -> Vec<usize> {
        self.model.initial_states.iter().map(|i| i - 1).collect()
    }
}

fn rate_spec(states: usize, horizon: f64, rates: &[StateRate], b0: f64) -> PaymentSpec {
    let mut spec = PaymentSpec::new(states, horizon).with_initial_payment(b0);
    if !rates.is_empty() {
        let table: Vec<(usize, Expr)> = rates.iter().map(|r| (r.state - 1, r.value.clone())).collect();
        spec = spec.with_rate(move |j, v, s| {
            table
                .iter()
                .filter(|(a, _)| *a == j)
                .map(|(_, e)| e.eval(s, v))
                .sum()
        });
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
initial_states = [1]
[model.family]
kind = "constant"
matrix = [[-1.0, 1.0], [0.0, 0.0]]

[payments]
horizon = 1.0
[[payments.lump]]
from = 1
to = 2
value = [{ scale = 1.0 }]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.states(), 2);
        assert_eq!(cfg.engine.tail_prob, 1e-10);
        let p = cfg.payments().unwrap();
        assert!(p.is_duration_independent());
        assert_eq!(p.lump(0, 0.3, 1, 0.5), 1.0);
        assert_eq!(p.lump(1, 0.3, 0, 0.5), 0.0);
        let echo = cfg.echo();
        assert!(echo.contains("tail_prob"));
        assert_eq!(RunConfig::from_toml(&echo).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = MINIMAL.replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("horizn"), "{err}");
    }

    #[test]
    fn state_labels_are_checked() {
        let text = MINIMAL.replace("to = 2", "to = 3");
        assert!(RunConfig::from_toml(&text).is_err());
    }
}
