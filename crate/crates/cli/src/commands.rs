use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use polyattn_core::dataset::write_matrix_csv;
use polyattn_core::verify::{
    beta_sweep, check_c_bounds, check_entry_formulas, mc_concentration, replay_instance,
    separation_experiment, write_sweep_csv, write_trials_csv, DatasetSpec, Expectation,
    ExperimentReport, LemmaId, Regime, RegimeConfig, RunMeta, SelfAttnCheck, Target,
};
use polyattn_core::{
    sample_score, sample_selfattn, Instance, InstanceDocument, Label, SelfAttnInstance,
};

use crate::config::{RunConfig, SweepSpec};
use crate::{CheckArgs, GenArgs, InstanceArgs, Invalid, Kind, SeparationArgs, SweepArgs};

const MC_TRIALS: usize = 10_000;
const SEPARATION_TRIALS: usize = 200;

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, Invalid> {
    seed.ok_or_else(|| Invalid(format!("--seed is required for {what}")))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read instance {}: {e}", path.display())))?;
    let doc: InstanceDocument = serde_json::from_str(&text)
        .map_err(|e| Invalid(format!("invalid instance {}: {e}", path.display())))?;
    Ok(Instance::from_document(&doc)?)
}

/// Validate the shape, then build at `j3` (1-based) or sample it from `seed`.
fn selfattn_from_args(
    p: &InstanceArgs,
    label: Label,
    j3: Option<usize>,
    seed: Option<u64>,
) -> Result<SelfAttnInstance> {
    let (d, t) = match (p.d, p.t) {
        (Some(d), Some(t)) => (d, t),
        _ => return Err(Invalid("--d and --t are required for selfattn".into()).into()),
    };
    let a =
        p.a.ok_or_else(|| Invalid("--a is required for selfattn".into()))?;
    let n = p.n.unwrap_or(d.saturating_sub(2).saturating_mul(t));
    SelfAttnInstance::new(n, d, t, 0, a, p.b, p.c, label)?;
    match j3 {
        Some(0) => Err(Invalid("1 ≤ j3 ≤ n: j3 = 0".into()).into()),
        Some(j) => Ok(SelfAttnInstance::new(n, d, t, j - 1, a, p.b, p.c, label)?),
        None => {
            let seed = require_seed(seed, "sampling j3 (or pass --j3)")?;
            Ok(sample_selfattn(d, t, a, p.b, p.c, label, seed)?)
        }
    }
}

pub fn gen_dataset(args: GenArgs) -> Result<u8> {
    let instance = match args.kind {
        Kind::Score => {
            let n = args
                .inst
                .n
                .ok_or_else(|| Invalid("--n is required for score".into()))?;
            let seed = require_seed(args.seed, "sampling a score vector")?;
            Instance::Score(sample_score(n, args.label, seed)?)
        }
        Kind::Selfattn => Instance::SelfAttn(selfattn_from_args(
            &args.inst,
            args.label,
            args.inst.j3,
            args.seed,
        )?),
    };
    let doc = instance.to_document(args.seed);
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    write_text(args.out.as_deref(), &text)?;
    if let Some(path) = &args.csv {
        write_matrix_csv(&instance.matrix()?, create(path)?)?;
    }
    log::info!("wrote {} {} instance", doc.kind, doc.label);
    Ok(0)
}

fn meta_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}.meta.json"))
}

/// Canonical JSON to `path` (or standard output), timing to a sidecar file.
fn emit_report(report: &ExperimentReport, path: Option<&Path>, started: Instant) -> Result<()> {
    write_text(path, &(report.canonical_json()? + "\n"))?;
    if let Some(p) = path {
        let meta = RunMeta {
            wall_clock_ms: started.elapsed().as_millis(),
        };
        fs::write(meta_path(p), serde_json::to_string_pretty(&meta)? + "\n")?;
    }
    Ok(())
}

fn verdict(report: &ExperimentReport) -> u8 {
    if report.passed {
        return 0;
    }
    for f in report.failures() {
        eprintln!("fail: {f}");
    }
    3
}

impl CheckArgs {
    fn regime_config(&self, regime: Regime, trials: usize, seed: u64) -> RegimeConfig {
        let mut cfg = RegimeConfig::new(regime, self.beta, trials, seed);
        cfg.c0 = self.c0;
        cfg.tau = self.tau;
        cfg.tau_sqrt_log = self.tau_sqrt_log;
        cfg.m = self.m;
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.log_base {
            cfg.log_base = v;
        }
        if let Some(v) = self.rate_threshold {
            cfg.rate_threshold = v;
        }
        cfg
    }

    fn fixed_regime(&self, regime: Regime) -> Result<Regime, Invalid> {
        match self.regime {
            Some(r) if r != regime => Err(Invalid(format!(
                "{} runs in the {regime} regime, not {r}",
                self.id
            ))),
            _ => Ok(regime),
        }
    }
}

fn label_matches(instance: &Instance, label: Label, id: &str) -> Result<(), Invalid> {
    if instance.label() != label {
        return Err(Invalid(format!(
            "{id} needs a {label} instance, got {}",
            instance.label()
        )));
    }
    Ok(())
}

pub fn check_lemma(args: CheckArgs) -> Result<u8> {
    let started = Instant::now();
    let id: LemmaId = args.id.parse()?;
    let report = match id {
        LemmaId::Score(label) => {
            let seed = require_seed(args.seed, "Monte Carlo checks")?;
            let s = match &args.instance {
                Some(p) => match load_instance(p)? {
                    Instance::Score(s) => s,
                    Instance::SelfAttn(_) => {
                        return Err(Invalid(format!("{} needs a score instance", args.id)).into())
                    }
                },
                None => {
                    let n = args
                        .inst
                        .n
                        .ok_or_else(|| Invalid("--n or --instance is required".into()))?;
                    sample_score(n, label, seed)?
                }
            };
            label_matches(&Instance::Score(s.clone()), label, &args.id)?;
            let base = args.log_base.unwrap_or(2.0);
            let log_n = (s.dim() as f64).ln() / base.ln();
            let regime = args.regime.unwrap_or(if args.beta > log_n / 3.0 {
                Regime::HighBeta
            } else {
                Regime::LowBeta
            });
            let cfg = args.regime_config(regime, args.trials.unwrap_or(MC_TRIALS), seed);
            mc_concentration(Target::Score(&s), args.beta, &cfg)?
        }
        LemmaId::Separation(regime) => {
            let regime = args.fixed_regime(regime)?;
            let seed = require_seed(args.seed, "separation experiments")?;
            let n = args
                .inst
                .n
                .ok_or_else(|| Invalid("--n is required".into()))?;
            let cfg = args.regime_config(regime, args.trials.unwrap_or(SEPARATION_TRIALS), seed);
            separation_experiment(&cfg, &DatasetSpec::Score {}, &[n])?
        }
        LemmaId::SelfAttn(check, variant, label) => {
            let regime = args.fixed_regime(variant.regime())?;
            let inst = match &args.instance {
                Some(p) => {
                    let loaded = load_instance(p)?;
                    label_matches(&loaded, label, &args.id)?;
                    match loaded {
                        Instance::SelfAttn(i) => i,
                        Instance::Score(_) => {
                            return Err(
                                Invalid(format!("{} needs a selfattn instance", args.id)).into()
                            )
                        }
                    }
                }
                None => {
                    selfattn_from_args(&args.inst, label, Some(args.inst.j3.unwrap_or(1)), None)?
                }
            };
            match check {
                SelfAttnCheck::F => {
                    check_entry_formulas(&inst, args.beta, &args.regime_config(regime, 1, 0))?
                }
                SelfAttnCheck::C => {
                    check_c_bounds(&inst, args.beta, &args.regime_config(regime, 1, 0))?
                }
                SelfAttnCheck::Random => {
                    let seed = require_seed(args.seed, "Monte Carlo checks")?;
                    let cfg = args.regime_config(regime, args.trials.unwrap_or(MC_TRIALS), seed);
                    mc_concentration(Target::SelfAttn(&inst), args.beta, &cfg)?
                }
            }
        }
    };
    emit_report(&report, args.out.as_deref(), started)?;
    Ok(verdict(&report))
}

fn print_table(report: &ExperimentReport) {
    println!(
        "{:<10} {:<5} {:>7} {:>9} {:>8} {:>5} {:>7} {:>9} {:>9} {:<8} pass",
        "regime", "label", "n", "beta", "tau", "m", "trials", "rate_F>0", "rate_F=0", "expect"
    );
    for c in &report.cells {
        let expect = match c.expectation {
            Expectation::Positive => "F>0",
            Expectation::Zero => "F=0",
        };
        println!(
            "{:<10} {:<5} {:>7} {:>9.4} {:>8.4} {:>5} {:>7} {:>9.3} {:>9.3} {:<8} {}",
            c.regime.as_str(),
            c.label.as_str(),
            c.n,
            c.beta,
            c.tau,
            c.m,
            c.trials,
            c.rate_f_positive,
            c.rate_f_zero,
            expect,
            if c.pass { "yes" } else { "no" }
        );
    }
}

fn sweep_betas(
    flag: Option<&str>,
    configured: Option<&SweepSpec>,
    cfg: &RegimeConfig,
    n: usize,
) -> Result<(Vec<f64>, Option<usize>), Invalid> {
    let spec = match (flag, configured) {
        (Some(s), _) => SweepSpec {
            n: configured.and_then(|c| c.n),
            ..SweepSpec::parse(s)?
        },
        (None, Some(c)) => c.clone(),
        (None, None) => SweepSpec {
            start: 0.0,
            stop: 0.5 * cfg.log_n(n),
            count: 11,
            n: None,
        },
    };
    Ok((spec.betas()?, spec.n))
}

pub fn run_separation(args: SeparationArgs) -> Result<u8> {
    let started = Instant::now();
    let run = RunConfig::load(&args.config)?;
    let seed = require_seed(args.seed, "run-separation")?;
    let cfg = run.regime_config(seed);
    let paths = run.output.resolve(args.out.as_deref());
    fs::create_dir_all(&paths.dir).with_context(|| format!("creating {}", paths.dir.display()))?;

    let mut report = match (&run.dataset, run.instance_path(&args.config)) {
        (_, Some(p)) => {
            if args.sweep_beta.is_some() || run.sweep.is_some() {
                return Err(Invalid("β sweeps need a dataset, not an instance".into()).into());
            }
            replay_instance(&cfg, &load_instance(&p)?)?
        }
        (Some(dataset), None) => {
            let mut report = separation_experiment(&cfg, dataset, &run.sizes)?;
            let (betas, n) = sweep_betas(
                args.sweep_beta.as_deref(),
                run.sweep.as_ref(),
                &cfg,
                run.sizes[0],
            )?;
            let sweep = beta_sweep(&cfg, dataset, n.unwrap_or(run.sizes[0]), &betas)?;
            write_sweep_csv(&sweep.sweep, create(&paths.sweep_csv)?)?;
            report.sweep = sweep.sweep;
            report
        }
        (None, None) => unreachable!("RunConfig::load requires dataset or instance"),
    };
    report.finalize();
    print_table(&report);
    write_trials_csv(&report.trials, create(&paths.trials_csv)?)?;
    emit_report(&report, Some(&paths.report), started)?;
    log::info!("report written to {}", paths.report.display());
    Ok(verdict(&report))
}

pub fn sweep_beta(args: SweepArgs) -> Result<u8> {
    let run = RunConfig::load(&args.config)?;
    let seed = require_seed(args.seed, "sweep-beta")?;
    let cfg = run.regime_config(seed);
    let dataset = run
        .dataset
        .as_ref()
        .ok_or_else(|| Invalid("sweep-beta needs a dataset".into()))?;
    let first = run.sizes[0];
    let (betas, n) = sweep_betas(
        args.sweep_beta.as_deref(),
        run.sweep.as_ref(),
        &cfg,
        args.n.unwrap_or(first),
    )?;
    let n = args.n.or(n).unwrap_or(first);
    let report = beta_sweep(&cfg, dataset, n, &betas)?;
    let path = match args.out {
        Some(p) => p,
        None => {
            let paths = run.output.resolve(None);
            fs::create_dir_all(&paths.dir)?;
            paths.sweep_csv
        }
    };
    write_sweep_csv(&report.sweep, create(&path)?)?;
    log::info!(
        "{} sweep rows written to {}",
        report.sweep.len(),
        path.display()
    );
    Ok(0)
}
