use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Regime, RegimeConfig};
use crate::dataset::Label;
use crate::error::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Compact decimal rendering for messages.
pub(crate) fn fmt_num(x: f64) -> String {
    if x == 0.0 || (1e-4..1e7).contains(&x.abs()) {
        let s = format!("{x:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{x:.6e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Relation {
    Ge,
    Le,
    Lt,
    OpenBand,
}

/// One evaluated regime inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub holds: bool,
    #[serde(skip)]
    relation: Option<Relation>,
}

impl GateCheck {
    fn make(inequality: &str, lhs: f64, rhs: f64, upper: Option<f64>, relation: Relation) -> Self {
        let holds = match relation {
            Relation::Ge => lhs >= rhs,
            Relation::Le => lhs <= rhs,
            Relation::Lt => lhs < rhs,
            Relation::OpenBand => lhs > rhs && lhs < upper.unwrap_or(f64::INFINITY),
        };
        Self {
            inequality: inequality.into(),
            lhs,
            rhs,
            upper,
            holds,
            relation: Some(relation),
        }
    }

    pub fn ge(inequality: &str, lhs: f64, rhs: f64) -> Self {
        Self::make(inequality, lhs, rhs, None, Relation::Ge)
    }

    pub fn le(inequality: &str, lhs: f64, rhs: f64) -> Self {
        Self::make(inequality, lhs, rhs, None, Relation::Le)
    }

    pub fn lt(inequality: &str, lhs: f64, rhs: f64) -> Self {
        Self::make(inequality, lhs, rhs, None, Relation::Lt)
    }

    /// `lo < value < hi`.
    pub fn open_band(inequality: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self::make(inequality, value, lo, Some(hi), Relation::OpenBand)
    }

    /// Decide the comparison on the logs of both sides instead, for powers
    /// that may overflow.
    pub fn with_logs(mut self, log_lhs: f64, log_rhs: f64) -> Self {
        self.holds = match self.relation {
            Some(Relation::Ge) => log_lhs >= log_rhs,
            Some(Relation::Le) => log_lhs <= log_rhs,
            Some(Relation::Lt) => log_lhs < log_rhs,
            _ => self.holds,
        };
        self
    }

    /// `"(a+1)^β ≥ n: 4 < 9"` style message.
    pub fn describe(&self) -> String {
        let (l, r) = (fmt_num(self.lhs), fmt_num(self.rhs));
        let got = match self.relation {
            Some(Relation::Ge) => format!("{l} < {r}"),
            Some(Relation::Le) => format!("{l} > {r}"),
            Some(Relation::Lt) => format!("{l} ≥ {r}"),
            Some(Relation::OpenBand) | None => format!(
                "value {l} outside ({r}, {})",
                fmt_num(self.upper.unwrap_or(f64::INFINITY))
            ),
        };
        if self.holds {
            format!("{}: holds ({l} vs {r})", self.inequality)
        } else {
            format!("{}: {got}", self.inequality)
        }
    }
}

/// Outcome of one deterministic clause over every entry it was evaluated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseVerdict {
    pub clause: String,
    pub checked: usize,
    pub violations: usize,
    /// Largest violation amount (0 when none); for equality clauses the
    /// largest absolute deviation.
    pub worst: f64,
    pub pass: bool,
}

impl ClauseVerdict {
    pub fn new(clause: impl Into<String>) -> Self {
        Self {
            clause: clause.into(),
            checked: 0,
            violations: 0,
            worst: 0.0,
            pass: true,
        }
    }

    /// `value ≥ bound`.
    pub(crate) fn at_least(&mut self, value: f64, bound: f64) {
        self.record(value >= bound, bound - value);
    }

    /// `value ≤ bound`.
    pub(crate) fn at_most(&mut self, value: f64, bound: f64) {
        self.record(value <= bound, value - bound);
    }

    /// `|value − expected| ≤ tol`.
    pub(crate) fn equals(&mut self, value: f64, expected: f64, tol: f64) {
        let dev = (value - expected).abs();
        self.checked += 1;
        self.worst = self.worst.max(dev);
        if !(dev <= tol) {
            self.violations += 1;
            self.pass = false;
        }
    }

    fn record(&mut self, ok: bool, excess: f64) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            self.pass = false;
            self.worst = self.worst.max(if excess.is_nan() {
                f64::INFINITY
            } else {
                excess
            });
        }
    }
}

/// Empirical event frequency against a stated probability or tail bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRecord {
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    pub trials: usize,
    pub hits: usize,
    pub frequency: f64,
    /// `"≥ p"` or `"≤ bound + allowance"`.
    pub claim: String,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hoeffding_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allowance: Option<f64>,
    pub pass: bool,
}

/// What a separation cell is expected to show.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Positive,
    Zero,
}

/// One (regime, label, n) cell of a separation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub regime: Regime,
    pub label: Label,
    pub n: usize,
    pub beta: f64,
    pub tau: f64,
    pub m: usize,
    pub trials: usize,
    pub f_positive: usize,
    pub f_zero: usize,
    pub rate_f_positive: f64,
    pub rate_f_zero: f64,
    pub expectation: Expectation,
    pub threshold: f64,
    pub pass: bool,
}

/// F value of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub label: Label,
    pub regime: Regime,
    pub n: usize,
    #[serde(rename = "F_value")]
    pub f_value: f64,
    pub seed: u64,
}

/// One point of a β sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub label: Label,
    #[serde(rename = "rate_F_positive")]
    pub rate_f_positive: f64,
}

/// Non-deterministic run metadata, left out of [`ExperimentReport::canonical_json`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_clock_ms: u128,
}

/// Result of any check or experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: String,
    pub lemma: String,
    pub config: RegimeConfig,
    pub target: Value,
    pub gates: Vec<GateCheck>,
    pub notes: Vec<String>,
    pub clauses: Vec<ClauseVerdict>,
    pub tails: Vec<TailRecord>,
    pub cells: Vec<CellOutcome>,
    pub trials: Vec<TrialRecord>,
    pub sweep: Vec<SweepRow>,
    #[serde(rename = "rate_F_positive")]
    pub rate_f_positive: Option<f64>,
    #[serde(rename = "rate_F_zero")]
    pub rate_f_zero: Option<f64>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

impl ExperimentReport {
    pub fn new(kind: &str, lemma: &str, config: RegimeConfig, target: Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.into(),
            lemma: lemma.into(),
            config,
            target,
            gates: Vec::new(),
            notes: Vec::new(),
            clauses: Vec::new(),
            tails: Vec::new(),
            cells: Vec::new(),
            trials: Vec::new(),
            sweep: Vec::new(),
            rate_f_positive: None,
            rate_f_zero: None,
            passed: true,
            meta: None,
        }
    }

    /// Recompute `passed` and the overall F rates from the parts.
    pub fn finalize(&mut self) {
        self.passed = self.gates.iter().all(|g| g.holds)
            && self.clauses.iter().all(|c| c.pass)
            && self.tails.iter().all(|t| t.pass)
            && self.cells.iter().all(|c| c.pass);
        let total: usize = self.cells.iter().map(|c| c.trials).sum();
        if total > 0 {
            let pos: usize = self.cells.iter().map(|c| c.f_positive).sum();
            let zero: usize = self.cells.iter().map(|c| c.f_zero).sum();
            self.rate_f_positive = Some(pos as f64 / total as f64);
            self.rate_f_zero = Some(zero as f64 / total as f64);
        }
    }

    /// Append another report's findings (gates, clauses, tails, cells,
    /// trials, sweep rows, notes).
    pub fn merge(&mut self, other: ExperimentReport) {
        self.gates.extend(other.gates);
        self.notes.extend(other.notes);
        self.clauses.extend(other.clauses);
        self.tails.extend(other.tails);
        self.cells.extend(other.cells);
        self.trials.extend(other.trials);
        self.sweep.extend(other.sweep);
        self.finalize();
    }

    /// JSON without the `meta` field; byte-identical across reruns.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.meta = None;
        Ok(serde_json::to_string_pretty(&copy)?)
    }

    /// Full JSON, including `meta` when present.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per failing verdict.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(
            self.gates
                .iter()
                .filter(|g| !g.holds)
                .map(|g| format!("gate {}", g.describe())),
        );
        out.extend(self.clauses.iter().filter(|c| !c.pass).map(|c| {
            format!(
                "clause {}: {} of {} violated (worst {})",
                c.clause,
                c.violations,
                c.checked,
                fmt_num(c.worst)
            )
        }));
        out.extend(self.tails.iter().filter(|t| !t.pass).map(|t| {
            format!(
                "event {}: frequency {} not {}",
                t.event,
                fmt_num(t.frequency),
                t.claim
            )
        }));
        out.extend(self.cells.iter().filter(|c| !c.pass).map(|c| {
            let (what, rate) = match c.expectation {
                Expectation::Positive => ("F>0", c.rate_f_positive),
                Expectation::Zero => ("F=0", c.rate_f_zero),
            };
            format!(
                "cell {} {} n={}: {what} rate {} < {}",
                c.regime,
                c.label,
                c.n,
                fmt_num(rate),
                fmt_num(c.threshold)
            )
        }));
        out
    }
}

/// `trial_index,label,regime,F_value,seed`, one row per trial.
pub fn write_trials_csv<W: Write>(trials: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial_index", "label", "regime", "F_value", "seed"])?;
    for t in trials {
        w.write_record([
            t.trial_index.to_string(),
            t.label.to_string(),
            t.regime.to_string(),
            t.f_value.to_string(),
            t.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `beta,label,rate_F_positive`, one row per (β, label).
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "label", "rate_F_positive"])?;
    for r in rows {
        w.write_record([
            r.beta.to_string(),
            r.label.to_string(),
            r.rate_f_positive.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_messages() {
        let g = GateCheck::ge("(a+1)^β ≥ n", 4.0, 9.0);
        assert!(!g.holds);
        assert_eq!(g.describe(), "(a+1)^β ≥ n: 4 < 9");
        let g = GateCheck::open_band("c0 ∈ (0, 0.2)", 0.3, 0.0, 0.2);
        assert!(!g.holds);
        assert!(g.describe().contains("outside (0, 0.2)"));
        assert!(GateCheck::lt("x < y", 1.0, 2.0).holds);
        assert!(
            !GateCheck::ge("big", f64::INFINITY, 1e308)
                .with_logs(1.0, 2.0)
                .holds
        );
    }

    #[test]
    fn clause_tracking() {
        let mut c = ClauseVerdict::new("f ≥ 1/2");
        c.at_least(0.6, 0.5);
        assert!(c.pass);
        c.at_least(0.4, 0.5);
        assert!(!c.pass);
        assert_eq!((c.checked, c.violations), (2, 1));
        assert!((c.worst - 0.1).abs() < 1e-15);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        let t = TrialRecord {
            trial_index: 0,
            label: Label::D1,
            regime: Regime::HighBeta,
            n: 4,
            f_value: 0.5,
            seed: 9,
        };
        write_trials_csv(&[t], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "trial_index,label,regime,F_value,seed\n0,d1,high_beta,0.5,9\n"
        );
        let mut buf = Vec::new();
        write_sweep_csv(
            &[SweepRow {
                beta: 0.05,
                label: Label::D0,
                rate_f_positive: 0.0,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "beta,label,rate_F_positive\n0.05,d0,0\n"
        );
    }
}
