//! Lemma checkers, Monte Carlo concentration checks and separation experiments.
//!
//! Every check first evaluates its regime gates (concrete numeric
//! inequalities on `n`, `β`, `a`, `c0`) and refuses to run with
//! [`Error::Gate`] if any fails.

mod concentration;
mod hoeffding;
mod lemmas;
mod report;
mod separation;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

pub use concentration::{mc_concentration, Target};
pub use hoeffding::{binomial_allowance, hoeffding_bound};
pub use lemmas::{
    check_c_bounds, check_c_bounds_with, check_entry_formulas, check_entry_formulas_with,
};
pub use report::{
    write_sweep_csv, write_trials_csv, CellOutcome, ClauseVerdict, Expectation, ExperimentReport,
    GateCheck, RunMeta, SweepRow, TailRecord, TrialRecord,
};
pub use separation::{beta_sweep, replay_instance, separation_experiment, DatasetSpec};

/// Which side of the degree threshold an experiment sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighBeta,
    LowBeta,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::HighBeta => "high_beta",
            Regime::LowBeta => "low_beta",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high_beta" | "high" => Ok(Regime::HighBeta),
            "low_beta" | "low" => Ok(Regime::LowBeta),
            _ => Err(Error::Config(format!(
                "regime must be high_beta or low_beta, got {s:?}"
            ))),
        }
    }
}

fn default_log_base() -> f64 {
    2.0
}

fn default_delta() -> f64 {
    0.01
}

fn default_m_constant() -> f64 {
    10.0
}

fn default_hoeffding_c() -> f64 {
    1.0
}

fn default_rate_threshold() -> f64 {
    0.95
}

/// Parameters shared by every check and experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub beta: f64,
    /// Exponent in `(a+1)^β ≤ n^{c0}`; derived as `β·ln(1+a)/ln n` when absent.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default = "default_log_base")]
    pub log_base: f64,
    /// Threshold of `φ_τ`; each experiment has its own default when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Use `(c+0.1)·√log n` in place of `c+0.1` where that variant is stated.
    #[serde(default)]
    pub tau_sqrt_log: bool,
    /// Sign-matrix width; `⌈m_constant · log(n/δ)⌉` when absent.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_m_constant")]
    pub m_constant: f64,
    /// Constant multiplying Hoeffding-derived thresholds.
    #[serde(default = "default_hoeffding_c")]
    pub hoeffding_c: f64,
    /// Minimum empirical rate accepted for "with high probability" claims.
    #[serde(default = "default_rate_threshold")]
    pub rate_threshold: f64,
}

impl RegimeConfig {
    pub fn new(regime: Regime, beta: f64, trials: usize, master_seed: u64) -> Self {
        Self {
            regime,
            beta,
            c0: None,
            log_base: default_log_base(),
            tau: None,
            tau_sqrt_log: false,
            m: None,
            delta: default_delta(),
            trials,
            master_seed,
            m_constant: default_m_constant(),
            hoeffding_c: default_hoeffding_c(),
            rate_threshold: default_rate_threshold(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!(
                "β must be a finite nonnegative real, got {}",
                self.beta
            ));
        }
        if !(self.log_base > 1.0 && self.log_base.is_finite()) {
            return bad(format!("log_base must exceed 1, got {}", self.log_base));
        }
        if !(self.delta > 0.0 && self.delta < 0.1) {
            return bad(format!("δ ∈ (0, 0.1), got {}", self.delta));
        }
        if self.trials == 0 {
            return bad("trials ≥ 1".into());
        }
        if self.m == Some(0) {
            return bad("m ≥ 1".into());
        }
        if let Some(t) = self.tau {
            if !t.is_finite() {
                return bad(format!("τ must be finite, got {t}"));
            }
        }
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0 && c0 < 1.0) {
                return bad(format!("c0 must lie in (0, 1), got {c0}"));
            }
        }
        if !(self.m_constant > 0.0 && self.hoeffding_c > 0.0) {
            return bad("m_constant and hoeffding_c must be positive".into());
        }
        if !(self.rate_threshold > 0.0 && self.rate_threshold <= 1.0) {
            return bad(format!(
                "rate_threshold ∈ (0, 1], got {}",
                self.rate_threshold
            ));
        }
        Ok(())
    }

    /// `log n` in the configured base.
    pub fn log_n(&self, n: usize) -> f64 {
        (n as f64).ln() / self.log_base.ln()
    }

    /// Sign-matrix width for length `n`.
    pub fn m_for(&self, n: usize) -> Result<usize> {
        match self.m {
            Some(m) => Ok(m),
            None => crate::network::columns_for(n, self.delta, self.m_constant, self.log_base),
        }
    }
}

/// Exponential-growth (high β) or near-linear (low β) form of the
/// self-attention lemmas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Exp,
    Lin,
}

impl From<Regime> for Variant {
    fn from(r: Regime) -> Self {
        match r {
            Regime::HighBeta => Variant::Exp,
            Regime::LowBeta => Variant::Lin,
        }
    }
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Exp => "exp",
            Variant::Lin => "lin",
        }
    }

    pub fn regime(&self) -> Regime {
        match self {
            Variant::Exp => Regime::HighBeta,
            Variant::Lin => Regime::LowBeta,
        }
    }
}

/// What a self-attention check is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfAttnCheck {
    F,
    C,
    Random,
}

/// Lemma identifiers accepted by `check-lemma`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaId {
    /// Concentration of `⟨f, σ⟩` on score vectors.
    Score(Label),
    /// Score-vector separation.
    Separation(Regime),
    SelfAttn(SelfAttnCheck, Variant, Label),
}

impl LemmaId {
    pub const ALL: [&'static str; 16] = [
        "p4-d0",
        "p4-d1",
        "s5-high",
        "s5-low",
        "s6-f-exp-d0",
        "s6-f-exp-d1",
        "s6-f-lin-d0",
        "s6-f-lin-d1",
        "s6-c-exp-d0",
        "s6-c-exp-d1",
        "s6-c-lin-d0",
        "s6-c-lin-d1",
        "s6-random-exp-d0",
        "s6-random-exp-d1",
        "s6-random-lin-d0",
        "s6-random-lin-d1",
    ];

    pub fn id(&self) -> String {
        match self {
            LemmaId::Score(l) => format!("p4-{l}"),
            LemmaId::Separation(Regime::HighBeta) => "s5-high".into(),
            LemmaId::Separation(Regime::LowBeta) => "s5-low".into(),
            LemmaId::SelfAttn(k, v, l) => {
                let k = match k {
                    SelfAttnCheck::F => "f",
                    SelfAttnCheck::C => "c",
                    SelfAttnCheck::Random => "random",
                };
                format!("s6-{k}-{}-{l}", v.as_str())
            }
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || {
            Error::Config(format!(
                "unknown lemma id {s:?}; expected one of {}",
                LemmaId::ALL.join(", ")
            ))
        };
        match s {
            "p4-d0" => return Ok(LemmaId::Score(Label::D0)),
            "p4-d1" => return Ok(LemmaId::Score(Label::D1)),
            "s5-high" => return Ok(LemmaId::Separation(Regime::HighBeta)),
            "s5-low" => return Ok(LemmaId::Separation(Regime::LowBeta)),
            _ => {}
        }
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 4 || parts[0] != "s6" {
            return Err(unknown());
        }
        let check = match parts[1] {
            "f" => SelfAttnCheck::F,
            "c" => SelfAttnCheck::C,
            "random" => SelfAttnCheck::Random,
            _ => return Err(unknown()),
        };
        let variant = match parts[2] {
            "exp" => Variant::Exp,
            "lin" => Variant::Lin,
            _ => return Err(unknown()),
        };
        let label = parts[3].parse::<Label>().map_err(|_| unknown())?;
        Ok(LemmaId::SelfAttn(check, variant, label))
    }
}

/// Fail with every violated gate listed, or pass through.
pub(crate) fn enforce(gates: &[GateCheck]) -> Result<()> {
    let failed: Vec<String> = gates
        .iter()
        .filter(|g| !g.holds)
        .map(GateCheck::describe)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Gate(failed.join("; ")))
    }
}

/// `c0 = β·ln(1+a)/ln n`, the smallest exponent with `(1+a)^β ≤ n^{c0}`.
pub fn derived_c0(beta: f64, a: f64, n: usize) -> f64 {
    beta * a.ln_1p() / (n as f64).ln()
}

/// Gates of the self-attention lemmas for one instance, and the `c0` used in
/// the resulting bounds (absent for the exp D1 form, which does not use it).
pub(crate) fn selfattn_gates(
    variant: Variant,
    label: Label,
    n: usize,
    a: f64,
    cfg: &RegimeConfig,
) -> (Vec<GateCheck>, Option<f64>) {
    let beta = cfg.beta;
    let log_n = cfg.log_n(n);
    let ln_n = (n as f64).ln();
    // (1+a)^β compared with n^k in log space
    let lhs = beta * a.ln_1p();
    let mut gates = Vec::new();
    match (variant, label) {
        (Variant::Exp, Label::D1) => {
            gates.push(GateCheck::ge("β ≥ log n", beta, log_n));
            gates.push(GateCheck::ge("a ≥ 1", a, 1.0));
            gates.push(GateCheck::ge("(a+1)^β ≥ n", lhs.exp(), n as f64).with_logs(lhs, ln_n));
            (gates, None)
        }
        (Variant::Exp, Label::D0) => {
            gates.push(GateCheck::ge("β ≥ log n", beta, log_n));
            gates.push(
                GateCheck::le("(a+1)^β ≤ n^{0.2}", lhs.exp(), (0.2 * ln_n).exp())
                    .with_logs(lhs, 0.2 * ln_n),
            );
            match cfg.c0 {
                Some(c0) => {
                    gates.push(GateCheck::open_band("c0 ∈ (0, 0.2)", c0, 0.0, 0.2));
                    gates.push(
                        GateCheck::le("(a+1)^β ≤ n^{c0}", lhs.exp(), (c0 * ln_n).exp())
                            .with_logs(lhs, c0 * ln_n),
                    );
                    (gates, Some(c0))
                }
                None => {
                    let c0 = derived_c0(beta, a, n);
                    gates.push(GateCheck::open_band(
                        "c0 = β·ln(1+a)/ln n ∈ (0, 0.2)",
                        c0,
                        0.0,
                        0.2,
                    ));
                    (gates, Some(c0))
                }
            }
        }
        (Variant::Lin, _) => {
            gates.push(
                GateCheck::lt("(1+a)^β < n^{0.1}", lhs.exp(), (0.1 * ln_n).exp())
                    .with_logs(lhs, 0.1 * ln_n),
            );
            match cfg.c0 {
                Some(c0) => {
                    gates.push(GateCheck::open_band("c0 ∈ (0, 0.1)", c0, 0.0, 0.1));
                    gates.push(
                        GateCheck::lt("(1+a)^β < n^{c0}", lhs.exp(), (c0 * ln_n).exp())
                            .with_logs(lhs, c0 * ln_n),
                    );
                    (gates, Some(c0))
                }
                None => {
                    let c0 = derived_c0(beta, a, n);
                    gates.push(GateCheck::open_band(
                        "c0 = β·ln(1+a)/ln n ∈ (0, 0.1)",
                        c0,
                        0.0,
                        0.1,
                    ));
                    (gates, Some(c0))
                }
            }
        }
    }
}

/// `β` inside an open band `(lo·log n, hi·log n)`.
pub(crate) fn beta_band_gate(name: &str, beta: f64, lo: f64, hi: f64, log_n: f64) -> GateCheck {
    GateCheck::open_band(name, beta, lo * log_n, hi * log_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma_ids_round_trip() {
        for id in LemmaId::ALL {
            assert_eq!(id.parse::<LemmaId>().unwrap().id(), id);
        }
        assert!("s6-g-exp-d0".parse::<LemmaId>().is_err());
        assert!("p4-d2".parse::<LemmaId>().is_err());
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: RegimeConfig =
            serde_json::from_str(r#"{"regime":"high_beta","beta":4,"trials":10,"master_seed":1}"#)
                .unwrap();
        assert_eq!(cfg, RegimeConfig::new(Regime::HighBeta, 4.0, 10, 1));
        assert!(serde_json::from_str::<RegimeConfig>(
            r#"{"regime":"high_beta","beta":4,"trials":10,"master_seed":1,"extra":0}"#
        )
        .is_err());
    }

    #[test]
    fn gate_arithmetic() {
        let cfg = RegimeConfig::new(Regime::HighBeta, 2.0, 1, 0);
        let (gates, _) = selfattn_gates(Variant::Exp, Label::D1, 9, 1.0, &cfg);
        let err = enforce(&gates).unwrap_err().to_string();
        assert!(err.contains("(a+1)^β ≥ n"), "{err}");

        let cfg = RegimeConfig::new(Regime::HighBeta, 11.0, 1, 0);
        let (gates, _) = selfattn_gates(Variant::Exp, Label::D1, 1024, 1.0, &cfg);
        assert!(enforce(&gates).is_ok());
        let (gates, c0) = selfattn_gates(Variant::Exp, Label::D0, 1024, 0.05, &cfg);
        assert!(enforce(&gates).is_ok());
        assert!((c0.unwrap() - 11.0 * 1.05f64.ln() / 1024f64.ln()).abs() < 1e-15);

        let cfg = RegimeConfig::new(Regime::LowBeta, 2.0, 1, 0);
        let (gates, c0) = selfattn_gates(Variant::Lin, Label::D1, 1 << 16, 0.7, &cfg);
        assert!(enforce(&gates).is_ok());
        assert!(c0.unwrap() < 0.1);
        let (gates, _) = selfattn_gates(Variant::Lin, Label::D1, 1024, 0.7, &cfg);
        assert!(enforce(&gates).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = RegimeConfig::new(Regime::HighBeta, 4.0, 10, 1);
        assert!(cfg.validate().is_ok());
        cfg.delta = 0.2;
        assert!(cfg.validate().is_err());
        cfg.delta = 0.01;
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }
}
