//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are rejected. Relative paths resolve against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vitals_core::models::{ArchitectureId, TaskId};
use vitals_core::train::{AdamConfig, LossId, TrainingConfig};
use vitals_core::Exec;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Mths,
    Bidmc,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Mths => "mths",
            DatasetKind::Bidmc => "bidmc",
        }
    }

    /// Train/val/test fractions used when the config does not set them.
    pub fn default_fractions(self) -> [f64; 3] {
        match self {
            DatasetKind::Mths => [0.68, 0.12, 0.2],
            DatasetKind::Bidmc | DatasetKind::Synthetic => [0.8, 0.04, 0.16],
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "mths" => Ok(DatasetKind::Mths),
            "bidmc" => Ok(DatasetKind::Bidmc),
            _ => Err(format!("unknown dataset {s:?} (synthetic, mths, bidmc)")),
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "dataset_dir",
    "task",
    "arch",
    "loss",
    "huber_delta",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "eps",
    "seed",
    "fractions",
    "window_s",
    "hop_s",
    "out_dir",
    "synthetic_count",
    "synthetic_seed",
];

pub const DEFAULT_SYNTHETIC_COUNT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub dataset_dir: Option<PathBuf>,
    pub task: TaskId,
    /// Optional so a report config can omit it; `train` requires it.
    pub arch: Option<ArchitectureId>,
    pub loss: Option<LossId>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub window_s: f64,
    pub hop_s: f64,
    pub out_dir: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_seed: u64,
}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, UsageError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| usage(format!("config key `{key}`: cannot parse {raw:?}: {e}")))
}

fn parse_fractions(raw: &str) -> Result<[f64; 3], UsageError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return Err(usage(format!(
            "config key `fractions`: expected three values, got {raw:?}"
        )));
    };
    Ok([
        parse_value("fractions", a)?,
        parse_value("fractions", b)?,
        parse_value("fractions", c)?,
    ])
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, base)?)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, UsageError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "config line {}: expected key=value, got {line:?}",
                    n + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(usage(format!("config line {}: unknown key `{key}`", n + 1)));
            }
            if map.insert(key, value).is_some() {
                return Err(usage(format!("config line {}: key `{key}` given twice", n + 1)));
            }
        }
        let require = |key: &str| {
            map.get(key)
                .copied()
                .ok_or_else(|| usage(format!("config is missing required key `{key}`")))
        };
        let optional = |key: &str| map.get(key).copied();

        let dataset: DatasetKind = parse_value("dataset", require("dataset")?)?;
        let resolve = |raw: &str| {
            let p = PathBuf::from(raw);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let dataset_dir = match dataset {
            DatasetKind::Synthetic => optional("dataset_dir").map(resolve),
            _ => Some(resolve(require("dataset_dir")?)),
        };
        let task = parse_value("task", require("task")?)?;
        let arch = optional("arch").map(|v| parse_value("arch", v)).transpose()?;
        let loss = match optional("loss") {
            None => None,
            Some(v) => {
                let loss: LossId = parse_value("loss", v)?;
                Some(match (loss, optional("huber_delta")) {
                    (LossId::Huber { .. }, Some(d)) => {
                        LossId::huber(parse_value("huber_delta", d)?).map_err(|e| usage(e.to_string()))?
                    }
                    (other, _) => other,
                })
            }
        };
        let defaults = AdamConfig::default();
        let num = |key: &str, default: f64| optional(key).map_or(Ok(default), |v| parse_value(key, v));
        let adam = AdamConfig {
            learning_rate: num("learning_rate", defaults.learning_rate)?,
            beta1: num("beta1", defaults.beta1)?,
            beta2: num("beta2", defaults.beta2)?,
            eps: num("eps", defaults.eps)?,
        };
        let seed = optional("seed").map_or(Ok(1400), |v| parse_value("seed", v))?;
        let cfg = RunConfig {
            dataset,
            dataset_dir,
            task,
            arch,
            loss,
            epochs: optional("epochs").map_or(Ok(125), |v| parse_value("epochs", v))?,
            batch_size: optional("batch_size").map_or(Ok(32), |v| parse_value("batch_size", v))?,
            adam,
            seed,
            fractions: optional("fractions").map_or(Ok(dataset.default_fractions()), parse_fractions)?,
            window_s: num("window_s", 10.0)?,
            hop_s: num("hop_s", 1.0)?,
            out_dir: optional("out_dir").map(resolve),
            synthetic_count: optional("synthetic_count")
                .map_or(Ok(DEFAULT_SYNTHETIC_COUNT), |v| parse_value("synthetic_count", v))?,
            synthetic_seed: optional("synthetic_seed").map_or(Ok(seed), |v| parse_value("synthetic_seed", v))?,
        };
        cfg.training(cfg.arch.unwrap_or(ArchitectureId::Fcn), cfg.loss.unwrap_or(LossId::Mse))
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Training settings for one architecture/loss pair.
    pub fn training(&self, arch: ArchitectureId, loss: LossId) -> TrainingConfig {
        let mut t = TrainingConfig::new(self.dataset.name(), self.task, arch, loss);
        t.epochs = self.epochs;
        t.batch_size = self.batch_size;
        t.adam = self.adam;
        t.seed = self.seed;
        t.fractions = self.fractions;
        t.window_s = self.window_s;
        t.hop_s = self.hop_s;
        t.exec = Exec::default();
        t
    }

    pub fn require_arch_loss(&self) -> Result<(ArchitectureId, LossId), UsageError> {
        let arch = self
            .arch
            .ok_or_else(|| usage("config is missing required key `arch`"))?;
        let loss = self
            .loss
            .ok_or_else(|| usage("config is missing required key `loss`"))?;
        Ok((arch, loss))
    }

    pub fn require_out_dir(&self) -> Result<&Path, UsageError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| usage("config is missing required key `out_dir`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str =
        "# synthetic smoke run\ndataset = synthetic\ntask = hr\narch = fcn\nloss = logcosh\nout_dir = runs/a\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(BASIC, Path::new("/cfg")).unwrap();
        assert_eq!(c.epochs, 125);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.seed, 1400);
        assert_eq!(c.synthetic_seed, 1400);
        assert_eq!(c.fractions, [0.8, 0.04, 0.16]);
        assert_eq!(c.out_dir.as_deref(), Some(Path::new("/cfg/runs/a")));
        assert_eq!(c.require_arch_loss().unwrap(), (ArchitectureId::Fcn, LossId::LogCosh));
    }

    #[test]
    fn mths_default_fractions_and_dir_required() {
        let text = "dataset=mths\ntask=spo2\n";
        let err = RunConfig::parse(text, Path::new(".")).unwrap_err();
        assert!(err.0.contains("dataset_dir"), "{err}");
        let c = RunConfig::parse("dataset=mths\ndataset_dir=/d\ntask=spo2\n", Path::new(".")).unwrap();
        assert_eq!(c.fractions, [0.68, 0.12, 0.2]);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = RunConfig::parse(&format!("{BASIC}colour=red\n"), Path::new(".")).unwrap_err();
        assert!(err.0.contains("colour"));
        let err = RunConfig::parse(&format!("{BASIC}task=spo2\n"), Path::new(".")).unwrap_err();
        assert!(err.0.contains("twice"));
    }

    #[test]
    fn missing_loss_names_key() {
        let c = RunConfig::parse("dataset=synthetic\ntask=hr\narch=fcn\n", Path::new(".")).unwrap();
        assert!(c.require_arch_loss().unwrap_err().0.contains("`loss`"));
    }

    #[test]
    fn bad_values() {
        for extra in [
            "epochs=0",
            "fractions=0.5,0.5",
            "fractions=0.5,0.4,0.4",
            "learning_rate=fast",
            "seed=-1",
        ] {
            assert!(
                RunConfig::parse(&format!("{BASIC}{extra}\n"), Path::new(".")).is_err(),
                "{extra}"
            );
        }
    }

    #[test]
    fn huber_delta_applies() {
        let text = "dataset=synthetic\ntask=hr\nloss=huber\nhuber_delta=2.5\n";
        let c = RunConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.loss, Some(LossId::Huber { delta: 2.5 }));
    }
}
