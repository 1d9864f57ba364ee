//! Monte Carlo frequencies of the Rademacher events, against the stated
//! probabilities and Hoeffding tails.

use rayon::prelude::*;

use super::hoeffding::{binomial_allowance, hoeffding_bound};
use super::report::{fmt_num, TailRecord};
use super::{
    beta_band_gate, enforce, selfattn_gates, ExperimentReport, Regime, RegimeConfig, Variant,
};
use crate::attention::{c_poly, score_attention, AttentionWeights};
use crate::dataset::{Instance, Label, ScoreVector, SelfAttnInstance};
use crate::error::Result;
use crate::network::sample_signs;
use crate::rng::derive_seed;

/// Number of binomial standard deviations allowed above a Hoeffding tail.
pub const SIGMA_ALLOWANCE: f64 = 3.0;

/// What the sign vectors are paired with.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Score(&'a ScoreVector),
    SelfAttn(&'a SelfAttnInstance),
}

/// `⟨x, σ_k⟩` for `trials` sign vectors, each drawn from its own derived seed.
fn sample_inner_products(xs: &[&[f64]], trials: usize, master_seed: u64) -> Vec<Vec<f64>> {
    let dim = xs[0].len();
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let y = sample_signs(dim, 1, derive_seed(master_seed, k as u64));
            xs.iter().map(|x| y.inner(0, x)).collect()
        })
        .collect()
}

fn symmetric_ranges(x: &[f64]) -> Vec<(f64, f64)> {
    x.iter().map(|&v| (-v.abs(), v.abs())).collect()
}

fn at_least_record(
    event: String,
    row: Option<usize>,
    hits: usize,
    trials: usize,
    p: f64,
) -> TailRecord {
    let frequency = hits as f64 / trials as f64;
    TailRecord {
        event,
        row,
        trials,
        hits,
        frequency,
        claim: format!("≥ {}", fmt_num(p)),
        threshold: p,
        hoeffding_bound: None,
        allowance: None,
        pass: frequency >= p,
    }
}

fn tail_record(
    event: String,
    row: Option<usize>,
    hits: usize,
    trials: usize,
    bound: f64,
) -> TailRecord {
    let frequency = hits as f64 / trials as f64;
    let allowance = binomial_allowance(bound, trials, SIGMA_ALLOWANCE);
    TailRecord {
        event,
        row,
        trials,
        hits,
        frequency,
        claim: "≤ Hoeffding bound + 3σ".into(),
        threshold: bound + allowance,
        hoeffding_bound: Some(bound),
        allowance: Some(allowance),
        pass: frequency <= bound + allowance,
    }
}

/// Run `cfg.trials` sign draws against the target's attention vector(s).
pub fn mc_concentration(
    target: Target<'_>,
    beta: f64,
    cfg: &RegimeConfig,
) -> Result<ExperimentReport> {
    let cfg = RegimeConfig {
        beta,
        ..cfg.clone()
    };
    cfg.validate()?;
    match target {
        Target::Score(s) => score_concentration(s, &cfg),
        Target::SelfAttn(inst) => selfattn_concentration(inst, &cfg),
    }
}

fn score_concentration(s: &ScoreVector, cfg: &RegimeConfig) -> Result<ExperimentReport> {
    let n = s.dim();
    let log_n = cfg.log_n(n);
    let beta = cfg.beta;
    let gate = match (s.label(), cfg.regime) {
        (Label::D0, Regime::HighBeta) | (Label::D1, Regime::HighBeta) => {
            beta_band_gate("β ∈ (log n/3, 0.49·log n)", beta, 1.0 / 3.0, 0.49, log_n)
        }
        (Label::D0, Regime::LowBeta) => beta_band_gate("β ∈ (0, 0.2·log n)", beta, 0.0, 0.2, log_n),
        (Label::D1, Regime::LowBeta) => {
            beta_band_gate("β ∈ (0, 0.01·log n)", beta, 0.0, 0.01, log_n)
        }
    };
    let gates = vec![gate];
    enforce(&gates)?;

    let target = serde_json::to_value(Instance::Score(s.clone()).to_document(None))?;
    let mut report = ExperimentReport::new(
        "concentration",
        &format!("p4-{}", s.label()),
        cfg.clone(),
        target,
    );
    report.gates = gates;

    let f = score_attention(s.entries(), beta)?.f;
    let values: Vec<f64> = sample_inner_products(&[f.as_slice()], cfg.trials, cfg.master_seed)
        .into_iter()
        .map(|v| v[0])
        .collect();
    let trials = cfg.trials;
    let count = |p: &dyn Fn(f64) -> bool| values.iter().filter(|&&v| p(v)).count();
    let ranges = symmetric_ranges(f.as_slice());

    match (s.label(), cfg.regime) {
        (Label::D0, _) => {
            let inside = count(&|v: f64| v.abs() <= 0.1);
            report.tails.push(at_least_record(
                "|⟨f,σ⟩| ≤ 0.1".into(),
                None,
                inside,
                trials,
                cfg.rate_threshold,
            ));
            let bound = hoeffding_bound(&ranges, 0.1)?;
            report.tails.push(tail_record(
                "|⟨f,σ⟩| > 0.1".into(),
                None,
                trials - inside,
                trials,
                bound,
            ));
            if cfg.regime == Regime::HighBeta {
                report.notes.push(
                    "β band for D0 taken from the high-β D1 statement it is paired with".into(),
                );
            }
        }
        (Label::D1, Regime::HighBeta) => {
            let hits = count(&|v: f64| v >= 1.0 / 3.0);
            report.tails.push(at_least_record(
                "⟨f,σ⟩ ≥ 1/3".into(),
                None,
                hits,
                trials,
                0.25,
            ));
        }
        (Label::D1, Regime::LowBeta) => {
            let ln_ratio = (n as f64 / cfg.delta).ln() / cfg.log_base.ln();
            let radius = cfg.hoeffding_c * ln_ratio.sqrt() / (n as f64).sqrt() * 16f64.powf(beta);
            report
                .notes
                .push(format!("radius C·√(log(n/δ))/√n·16^β = {radius}"));
            let inside = count(&|v: f64| v.abs() <= radius);
            report.tails.push(at_least_record(
                "|⟨f,σ⟩| ≤ C·√(log(n/δ))/√n·16^β".into(),
                None,
                inside,
                trials,
                cfg.rate_threshold,
            ));
            let bound = hoeffding_bound(&ranges, radius)?;
            report.tails.push(tail_record(
                "|⟨f,σ⟩| > C·√(log(n/δ))/√n·16^β".into(),
                None,
                trials - inside,
                trials,
                bound,
            ));
        }
    }
    report.finalize();
    Ok(report)
}

/// Threshold on `⟨c, σ⟩` used by the self-attention statements.
pub(crate) fn selfattn_tau(
    c: f64,
    n: usize,
    variant: Variant,
    label: Label,
    cfg: &RegimeConfig,
    in_separation: bool,
) -> f64 {
    if let Some(t) = cfg.tau {
        return t;
    }
    let base = c + 0.1;
    // √log n applies to the lin concentration checks and the high-β D0 separation cell
    let stated = match (variant, label) {
        (Variant::Lin, _) => !in_separation,
        (Variant::Exp, Label::D0) => in_separation,
        (Variant::Exp, Label::D1) => false,
    };
    if cfg.tau_sqrt_log && stated {
        base * cfg.log_n(n).sqrt()
    } else {
        base
    }
}

fn selfattn_concentration(inst: &SelfAttnInstance, cfg: &RegimeConfig) -> Result<ExperimentReport> {
    let variant = Variant::from(cfg.regime);
    let (gates, c0) = selfattn_gates(variant, inst.label(), inst.n(), inst.a(), cfg);
    enforce(&gates)?;
    let lemma = format!("s6-random-{}-{}", variant.as_str(), inst.label());
    let target = serde_json::to_value(Instance::SelfAttn(inst.clone()).to_document(None))?;
    let mut report = ExperimentReport::new("concentration", &lemma, cfg.clone(), target);
    report.gates = gates;
    if let Some(c0) = c0 {
        report.notes.push(format!("c0 = {c0}"));
    }

    let n = inst.n();
    let c = inst.c();
    let d = inst.d();
    let w = AttentionWeights::ones_identity(d)?;
    let rows = if n > 1 {
        vec![inst.j3(), (inst.j3() + 1) % n]
    } else {
        vec![inst.j3()]
    };
    let cs: Vec<Vec<f64>> = rows
        .iter()
        .map(|&j0| c_poly(inst, &w, j0, cfg.beta).map(|v| v.into_inner()))
        .collect::<Result<_>>()?;
    let slices: Vec<&[f64]> = cs.iter().map(Vec::as_slice).collect();
    let values = sample_inner_products(&slices, cfg.trials, cfg.master_seed);
    let trials = cfg.trials;
    let tau = selfattn_tau(c, n, variant, inst.label(), cfg, false);
    report.notes.push(format!("τ = {tau}"));

    for (r, (&j0, cv)) in rows.iter().zip(&cs).enumerate() {
        let row_name = if j0 == inst.j3() {
            "j0 = j3"
        } else {
            "j0 ≠ j3"
        };
        let column = values.iter().map(|v| v[r]);
        match (variant, inst.label()) {
            (Variant::Exp, Label::D1) => {
                let hits = column.filter(|&v| v >= tau).count();
                report.tails.push(at_least_record(
                    format!("{row_name}: ⟨c,σ⟩ ≥ {}", fmt_num(tau)),
                    Some(j0 + 1),
                    hits,
                    trials,
                    0.1,
                ));
            }
            _ => {
                let inside = column.filter(|&v| v.abs() < tau).count();
                report.tails.push(at_least_record(
                    format!("{row_name}: |⟨c,σ⟩| < {}", fmt_num(tau)),
                    Some(j0 + 1),
                    inside,
                    trials,
                    cfg.rate_threshold,
                ));
                // |⟨c,σ⟩| ≥ τ forces the non-constant part to deviate by τ − c
                if tau > c {
                    let bound = hoeffding_bound(&symmetric_ranges(&cv[..d - 1]), tau - c)?;
                    report.tails.push(tail_record(
                        format!("{row_name}: |⟨c,σ⟩| ≥ {}", fmt_num(tau)),
                        Some(j0 + 1),
                        trials - inside,
                        trials,
                        bound,
                    ));
                }
            }
        }
    }
    report.finalize();
    Ok(report)
}
