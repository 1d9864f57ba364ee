//! End-to-end separation: sample instances and sign matrices, evaluate `F`,
//! and tabulate how often it is zero or positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::concentration::selfattn_tau;
use super::report::{CellOutcome, Expectation, SweepRow, TrialRecord};
use super::{
    beta_band_gate, enforce, selfattn_gates, ExperimentReport, GateCheck, Regime, RegimeConfig,
    Variant,
};
use crate::attention::AttentionWeights;
use crate::dataset::{sample_score, sample_selfattn, Instance, Label, SelfAttnInstance};
use crate::error::{Error, Result};
use crate::network::{f_network_score, f_network_selfattn, sample_signs, NetworkParams};
use crate::rng::{derive_seed, tags};

/// Which dataset family an experiment samples from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Score {},
    #[serde(rename = "selfattn")]
    SelfAttn {
        d: usize,
        a1: f64,
        a0: f64,
        b: f64,
        c: f64,
    },
}

impl DatasetSpec {
    fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Score {} => "score",
            DatasetSpec::SelfAttn { .. } => "selfattn",
        }
    }

    fn check_size(&self, n: usize) -> Result<usize> {
        match *self {
            DatasetSpec::Score {} => {
                if n < 2 {
                    return Err(Error::Config(format!("n ≥ 2, got {n}")));
                }
                Ok(0)
            }
            DatasetSpec::SelfAttn { d, a1, a0, b, c } => {
                if d < 3 || n % (d - 2) != 0 || n == 0 {
                    return Err(Error::Config(format!(
                        "n = (d−2)·t needs d−2 to divide n: n = {n}, d = {d}"
                    )));
                }
                let t = n / (d - 2);
                SelfAttnInstance::new(n, d, t, 0, a1, b, c, Label::D1)?;
                SelfAttnInstance::new(n, d, t, 0, a0, b, c, Label::D0)?;
                Ok(t)
            }
        }
    }
}

fn label_tag(label: Label) -> u64 {
    match label {
        Label::D0 => tags::LABEL_D0,
        Label::D1 => tags::LABEL_D1,
    }
}

fn expectation(regime: Regime, label: Label) -> Expectation {
    match (regime, label) {
        (Regime::HighBeta, Label::D1) => Expectation::Positive,
        _ => Expectation::Zero,
    }
}

fn gates_for(cfg: &RegimeConfig, dataset: &DatasetSpec, n: usize) -> Vec<GateCheck> {
    let log_n = cfg.log_n(n);
    match (dataset, cfg.regime) {
        (DatasetSpec::Score {}, Regime::HighBeta) => {
            vec![beta_band_gate(
                "β ∈ (log n/3, 0.45·log n)",
                cfg.beta,
                1.0 / 3.0,
                0.45,
                log_n,
            )]
        }
        (DatasetSpec::Score {}, Regime::LowBeta) => {
            vec![beta_band_gate(
                "β ∈ (0, 0.01·log n)",
                cfg.beta,
                0.0,
                0.01,
                log_n,
            )]
        }
        (DatasetSpec::SelfAttn { a1, a0, .. }, regime) => {
            let variant = Variant::from(regime);
            let mut g = Vec::new();
            for (label, a) in [(Label::D1, *a1), (Label::D0, *a0)] {
                let (mut gs, _) = selfattn_gates(variant, label, n, a, cfg);
                for gate in &mut gs {
                    gate.inequality = format!("{label}: {}", gate.inequality);
                }
                g.extend(gs);
            }
            g
        }
    }
}

/// Run one (n, label) cell at `beta` without gating.
fn run_cell(
    cfg: &RegimeConfig,
    dataset: &DatasetSpec,
    n: usize,
    label: Label,
    beta: f64,
) -> Result<(CellOutcome, Vec<TrialRecord>)> {
    let t = dataset.check_size(n)?;
    let m = cfg.m_for(n)?;
    let variant = Variant::from(cfg.regime);
    let tau = match dataset {
        DatasetSpec::Score {} => cfg.tau.unwrap_or(0.2),
        DatasetSpec::SelfAttn { c, .. } => selfattn_tau(*c, n, variant, label, cfg, true),
    };
    let params = NetworkParams::new(tau, m, beta, cfg.delta)?;
    let cell_seed = derive_seed(derive_seed(cfg.master_seed, n as u64), label_tag(label));

    let trials: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| -> Result<TrialRecord> {
            let seed = derive_seed(cell_seed, k as u64);
            let inst_seed = derive_seed(seed, tags::INSTANCE);
            let sign_seed = derive_seed(seed, tags::SIGNS);
            let f_value = match *dataset {
                DatasetSpec::Score {} => {
                    let s = sample_score(n, label, inst_seed)?;
                    let y = sample_signs(n, m, sign_seed);
                    f_network_score(&s, &y, &params)?
                }
                DatasetSpec::SelfAttn { d, a1, a0, b, c } => {
                    let a = if label == Label::D1 { a1 } else { a0 };
                    let inst = sample_selfattn(d, t, a, b, c, label, inst_seed)?;
                    let w = AttentionWeights::ones_identity(d)?;
                    let y = sample_signs(d, m, sign_seed);
                    f_network_selfattn(&inst, &w, &y, &params)?
                }
            };
            Ok(TrialRecord {
                trial_index: k,
                label,
                regime: cfg.regime,
                n,
                f_value,
                seed,
            })
        })
        .collect::<Result<_>>()?;

    let cell = tabulate(cfg, n, label, beta, tau, m, &trials);
    Ok((cell, trials))
}

fn tabulate(
    cfg: &RegimeConfig,
    n: usize,
    label: Label,
    beta: f64,
    tau: f64,
    m: usize,
    trials: &[TrialRecord],
) -> CellOutcome {
    let f_positive = trials.iter().filter(|r| r.f_value > 0.0).count();
    let f_zero = trials.len() - f_positive;
    let total = trials.len() as f64;
    let expectation = expectation(cfg.regime, label);
    let rate_f_positive = f_positive as f64 / total;
    let rate_f_zero = f_zero as f64 / total;
    let rate = match expectation {
        Expectation::Positive => rate_f_positive,
        Expectation::Zero => rate_f_zero,
    };
    CellOutcome {
        regime: cfg.regime,
        label,
        n,
        beta,
        tau,
        m,
        trials: trials.len(),
        f_positive,
        f_zero,
        rate_f_positive,
        rate_f_zero,
        expectation,
        threshold: cfg.rate_threshold,
        pass: rate >= cfg.rate_threshold,
    }
}

/// Gate, then run both labels at every size.
///
/// High β expects `F > 0` on D1 and `F = 0` on D0; low β expects `F = 0` on
/// both.
pub fn separation_experiment(
    cfg: &RegimeConfig,
    dataset: &DatasetSpec,
    sizes: &[usize],
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(Error::Config("sizes must be nonempty".into()));
    }
    let mut gates = Vec::new();
    for &n in sizes {
        dataset.check_size(n)?;
        gates.extend(gates_for(cfg, dataset, n));
    }
    enforce(&gates)?;

    let lemma = match (dataset, cfg.regime) {
        (DatasetSpec::Score {}, Regime::HighBeta) => "s5-high",
        (DatasetSpec::Score {}, Regime::LowBeta) => "s5-low",
        (DatasetSpec::SelfAttn { .. }, Regime::HighBeta) => "s6-separation-exp",
        (DatasetSpec::SelfAttn { .. }, Regime::LowBeta) => "s6-separation-lin",
    };
    let target = json!({ "dataset": dataset, "sizes": sizes });
    let mut report = ExperimentReport::new("separation", lemma, cfg.clone(), target);
    report.gates = gates;
    if matches!(dataset, DatasetSpec::SelfAttn { .. }) && cfg.regime == Regime::HighBeta {
        report
            .notes
            .push("the high-β zero-rate cell is run on D0 instances".into());
    }
    for &n in sizes {
        for label in Label::BOTH {
            let (cell, trials) = run_cell(cfg, dataset, n, label, cfg.beta)?;
            log::info!(
                "{} {} n={n}: F>0 rate {}, F=0 rate {}",
                dataset.name(),
                label,
                cell.rate_f_positive,
                cell.rate_f_zero
            );
            report.cells.push(cell);
            report.trials.extend(trials);
        }
    }
    report.finalize();
    Ok(report)
}

/// Evaluate `F` on one fixed instance against `cfg.trials` sign matrices.
///
/// Gated like the matching separation cell; the instance's label decides
/// the expectation.
pub fn replay_instance(cfg: &RegimeConfig, instance: &Instance) -> Result<ExperimentReport> {
    cfg.validate()?;
    let label = instance.label();
    let variant = Variant::from(cfg.regime);
    let (n, gates, tau) = match instance {
        Instance::Score(s) => (
            s.dim(),
            gates_for(cfg, &DatasetSpec::Score {}, s.dim()),
            cfg.tau.unwrap_or(0.2),
        ),
        Instance::SelfAttn(inst) => {
            let (gates, _) = selfattn_gates(variant, label, inst.n(), inst.a(), cfg);
            let tau = selfattn_tau(inst.c(), inst.n(), variant, label, cfg, true);
            (inst.n(), gates, tau)
        }
    };
    enforce(&gates)?;
    let m = cfg.m_for(n)?;
    let params = NetworkParams::new(tau, m, cfg.beta, cfg.delta)?;
    let trials: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| -> Result<TrialRecord> {
            let seed = derive_seed(cfg.master_seed, k as u64);
            let sign_seed = derive_seed(seed, tags::SIGNS);
            let f_value = match instance {
                Instance::Score(s) => f_network_score(s, &sample_signs(n, m, sign_seed), &params)?,
                Instance::SelfAttn(inst) => {
                    let w = AttentionWeights::ones_identity(inst.d())?;
                    f_network_selfattn(inst, &w, &sample_signs(inst.d(), m, sign_seed), &params)?
                }
            };
            Ok(TrialRecord {
                trial_index: k,
                label,
                regime: cfg.regime,
                n,
                f_value,
                seed,
            })
        })
        .collect::<Result<_>>()?;

    let target = serde_json::to_value(instance.to_document(None))?;
    let mut report = ExperimentReport::new(
        "replay",
        &format!("replay-{}", variant.as_str()),
        cfg.clone(),
        target,
    );
    report.gates = gates;
    report
        .cells
        .push(tabulate(cfg, n, label, cfg.beta, tau, m, &trials));
    report.trials = trials;
    report.finalize();
    Ok(report)
}

/// `rate_F_positive` for both labels at each β, without gates.
pub fn beta_sweep(
    cfg: &RegimeConfig,
    dataset: &DatasetSpec,
    n: usize,
    betas: &[f64],
) -> Result<ExperimentReport> {
    cfg.validate()?;
    dataset.check_size(n)?;
    let target = json!({ "dataset": dataset, "n": n, "betas": betas });
    let mut report = ExperimentReport::new("sweep", "beta-sweep", cfg.clone(), target);
    report.notes.push("sweep points are not gated".into());
    for &beta in betas {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!(
                "sweep β must be finite and nonnegative, got {beta}"
            )));
        }
        for label in Label::BOTH {
            let (cell, _) = run_cell(cfg, dataset, n, label, beta)?;
            report.sweep.push(SweepRow {
                beta,
                label,
                rate_f_positive: cell.rate_f_positive,
            });
        }
    }
    report.finalize();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_high_small() {
        let cfg = RegimeConfig::new(Regime::HighBeta, 4.0, 20, 11);
        let r = separation_experiment(&cfg, &DatasetSpec::Score {}, &[1024]).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.trials.len(), 40);
        let again = separation_experiment(&cfg, &DatasetSpec::Score {}, &[1024]).unwrap();
        assert_eq!(r.canonical_json().unwrap(), again.canonical_json().unwrap());
    }

    #[test]
    fn gates_block_out_of_band_beta() {
        let cfg = RegimeConfig::new(Regime::HighBeta, 1.0, 5, 0);
        assert!(matches!(
            separation_experiment(&cfg, &DatasetSpec::Score {}, &[1024]),
            Err(Error::Gate(_))
        ));
    }

    #[test]
    fn selfattn_size_must_factor() {
        let spec = DatasetSpec::SelfAttn {
            d: 34,
            a1: 1.0,
            a0: 0.05,
            b: 0.5,
            c: 0.5,
        };
        let cfg = RegimeConfig::new(Regime::HighBeta, 11.0, 5, 0);
        assert!(matches!(
            separation_experiment(&cfg, &spec, &[1000]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn replay_nine_token_instance() {
        let inst = Instance::SelfAttn(
            crate::dataset::build_selfattn_instance(9, 5, 3, 1, 1.0, 0.5, 0.5, Label::D1).unwrap(),
        );
        let cfg = RegimeConfig::new(Regime::HighBeta, 4.0, 30, 8);
        let r = replay_instance(&cfg, &inst).unwrap();
        assert_eq!(r.trials.len(), 30);
        assert_eq!(r.cells[0].expectation, Expectation::Positive);
        assert_eq!(
            r.canonical_json().unwrap(),
            replay_instance(&cfg, &inst)
                .unwrap()
                .canonical_json()
                .unwrap()
        );
        let low = RegimeConfig::new(Regime::HighBeta, 2.0, 30, 8);
        assert!(matches!(replay_instance(&low, &inst), Err(Error::Gate(_))));
    }

    #[test]
    fn dataset_spec_rejects_unknown_keys() {
        let ok: DatasetSpec =
            serde_json::from_str(r#"{"kind":"selfattn","d":34,"a1":1,"a0":0.05,"b":0.5,"c":0.5}"#)
                .unwrap();
        assert!(matches!(ok, DatasetSpec::SelfAttn { d: 34, .. }));
        assert!(serde_json::from_str::<DatasetSpec>(r#"{"kind":"score","x":1}"#).is_err());
    }

    #[test]
    fn sweep_shape() {
        let cfg = RegimeConfig::new(Regime::LowBeta, 0.05, 5, 2);
        let r = beta_sweep(&cfg, &DatasetSpec::Score {}, 64, &[0.05, 1.0, 4.0]).unwrap();
        assert_eq!(r.sweep.len(), 6);
        assert!(r
            .sweep
            .iter()
            .all(|s| (0.0..=1.0).contains(&s.rate_f_positive)));
    }
}
