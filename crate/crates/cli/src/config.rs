//! Run configuration files for `run-separation` and `sweep-beta`.

use std::path::{Path, PathBuf};

use polyattn_core::verify::{DatasetSpec, Regime, RegimeConfig};
use serde::Deserialize;

use crate::Invalid;

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;

/// `start:stop:count`, inclusive at both ends.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    /// Size the sweep runs at; the first entry of `sizes` when absent.
    #[serde(default)]
    pub n: Option<usize>,
}

impl SweepSpec {
    pub fn parse(s: &str) -> Result<Self, Invalid> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Invalid(format!("--sweep-beta expects start:stop:count, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = parts[0].trim().parse().map_err(|_| bad())?;
        let stop = parts[1].trim().parse().map_err(|_| bad())?;
        let count = parts[2].trim().parse().map_err(|_| bad())?;
        let spec = SweepSpec {
            start,
            stop,
            count,
            n: None,
        };
        spec.betas()?;
        Ok(spec)
    }

    pub fn betas(&self) -> Result<Vec<f64>, Invalid> {
        if self.count == 0 {
            return Err(Invalid("sweep count ≥ 1".into()));
        }
        if !(self.start >= 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            return Err(Invalid(format!(
                "sweep needs 0 ≤ start ≤ stop, got {}:{}",
                self.start, self.stop
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect())
    }
}

/// Where outputs land. Names are relative to `dir`.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub trials_csv: Option<String>,
    #[serde(default)]
    pub sweep_csv: Option<String>,
}

impl OutputPaths {
    pub fn resolve(&self, dir_override: Option<&Path>) -> Resolved {
        let dir = dir_override
            .map(Path::to_path_buf)
            .or_else(|| self.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let name = |v: &Option<String>, default: &str| dir.join(v.as_deref().unwrap_or(default));
        Resolved {
            report: name(&self.report, "report.json"),
            trials_csv: name(&self.trials_csv, "trials.csv"),
            sweep_csv: name(&self.sweep_csv, "sweep.csv"),
            dir,
        }
    }
}

pub struct Resolved {
    pub dir: PathBuf,
    pub report: PathBuf,
    pub trials_csv: PathBuf,
    pub sweep_csv: PathBuf,
}

/// Experiment description. The seed is never read from here; it comes
/// from `--seed`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub regime: Regime,
    pub beta: f64,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub log_base: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_sqrt_log: bool,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    pub trials: usize,
    #[serde(default)]
    pub m_constant: Option<f64>,
    #[serde(default)]
    pub hoeffding_c: Option<f64>,
    #[serde(default)]
    pub rate_threshold: Option<f64>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputPaths,
    /// Instance document to replay instead of sampling.
    #[serde(default)]
    pub instance: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Invalid> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("invalid config {}: {e}", path.display())))?;
        if cfg.schema_version != RUN_CONFIG_SCHEMA_VERSION {
            return Err(Invalid(format!(
                "unsupported schema_version {} (expected {RUN_CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        match (&cfg.dataset, &cfg.instance) {
            (Some(_), Some(_)) => {
                return Err(Invalid("set either dataset or instance, not both".into()))
            }
            (None, None) => return Err(Invalid("one of dataset or instance is required".into())),
            (Some(_), None) if cfg.sizes.is_empty() => {
                return Err(Invalid("sizes must list at least one n".into()))
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn regime_config(&self, seed: u64) -> RegimeConfig {
        let mut r = RegimeConfig::new(self.regime, self.beta, self.trials, seed);
        r.c0 = self.c0;
        r.tau = self.tau;
        r.tau_sqrt_log = self.tau_sqrt_log;
        r.m = self.m;
        if let Some(v) = self.log_base {
            r.log_base = v;
        }
        if let Some(v) = self.delta {
            r.delta = v;
        }
        if let Some(v) = self.m_constant {
            r.m_constant = v;
        }
        if let Some(v) = self.hoeffding_c {
            r.hoeffding_c = v;
        }
        if let Some(v) = self.rate_threshold {
            r.rate_threshold = v;
        }
        r
    }

    /// Instance paths are read relative to the config file.
    pub fn instance_path(&self, config_path: &Path) -> Option<PathBuf> {
        self.instance.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                config_path.parent().unwrap_or(Path::new(".")).join(p)
            }
        })
    }
}
