//! Run configuration: a flat `key = value` text file whose entries can be
//! overridden one by one (the CLI applies its flags through [`RunConfig::set`]).
//!
//! ```text
//! # murmur.conf
//! cache_dir = cache
//! out_dir = runs/full
//! seed = 42
//! mode = full
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::{Branches, Topology};
use crate::pipeline::{CvConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_root: Option<PathBuf>,
    /// Feature cache; `<out_dir>/cache` when unset.
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2_lambda: f64,
    pub folds: usize,
    pub mode: Branches,
    pub patience: usize,
    pub min_delta: f64,
    pub synth_per_class: usize,
    pub synth_duration_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            data_root: None,
            cache_dir: None,
            out_dir: PathBuf::from("out"),
            seed: train.seed,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            l2_lambda: train.topology.l2_lambda,
            folds: CvConfig::default().k,
            mode: Branches::Full,
            patience: train.patience,
            min_delta: train.min_delta,
            synth_per_class: 100,
            synth_duration_s: 4.0,
        }
    }
}

/// Every recognised key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 14] = [
    "data_root",
    "cache_dir",
    "out_dir",
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "l2_lambda",
    "folds",
    "mode",
    "patience",
    "min_delta",
    "synth_per_class",
    "synth_duration_s",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Defaults overlaid with the entries of `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one key from its textual value. Does not validate ranges; call
    /// [`RunConfig::validate`] once all values are in place.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_root" => self.data_root = Some(PathBuf::from(value)),
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "l2_lambda" => self.l2_lambda = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "mode" => self.mode = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "patience" => self.patience = parse(key, value)?,
            "min_delta" => self.min_delta = parse(key, value)?,
            "synth_per_class" => self.synth_per_class = parse(key, value)?,
            "synth_duration_s" => self.synth_duration_s = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("synth_per_class", self.synth_per_class),
        ];
        if let Some((key, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        let reals = [("lr", self.lr), ("l2_lambda", self.l2_lambda), ("synth_duration_s", self.synth_duration_s)];
        if let Some((key, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{key} must be positive, got {v}")));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return Err(Error::Config(format!("min_delta must be >= 0, got {}", self.min_delta)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            patience: self.patience,
            min_delta: self.min_delta,
            topology: Topology {
                l2_lambda: self.l2_lambda,
                ..Topology::with_branches(self.mode)
            },
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.folds,
            train: self.train_config(),
        }
    }

    /// Serializes every key; `from_text(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "data_root" => match &self.data_root {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                "cache_dir" => match &self.cache_dir {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                "out_dir" => self.out_dir.display().to_string(),
                "seed" => self.seed.to_string(),
                "epochs" => self.epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "lr" => format!("{:?}", self.lr),
                "l2_lambda" => format!("{:?}", self.l2_lambda),
                "folds" => self.folds.to_string(),
                "mode" => self.mode.as_str().to_string(),
                "patience" => self.patience.to_string(),
                "min_delta" => format!("{:?}", self.min_delta),
                "synth_per_class" => self.synth_per_class.to_string(),
                "synth_duration_s" => format!("{:?}", self.synth_duration_s),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cv_config(), CvConfig::default());
        assert_eq!(c.cache_path(), PathBuf::from("out/cache"));
    }

    #[test]
    fn parses_comments_and_whitespace() {
        let c = RunConfig::from_text("# header\n\n  seed = 42  # trailing\nmode=cnn-only\nlr = 5e-4\n").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.mode, Branches::CnnOnly);
        assert_eq!(c.lr, 5e-4);
        assert_eq!(c.cv_config().train.topology.branches, Branches::CnnOnly);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(matches!(RunConfig::from_text("sead = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("seed 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("epochs = -3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_text("mode = both"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_requires_positive_numbers() {
        for (key, value) in [
            ("epochs", "0"),
            ("batch_size", "0"),
            ("lr", "0"),
            ("l2_lambda", "-1e-4"),
            ("folds", "1"),
            ("synth_duration_s", "NaN"),
        ] {
            let mut c = RunConfig::default();
            c.set(key, value).unwrap();
            assert!(c.validate().is_err(), "{key} = {value}");
        }
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.data_root = Some(PathBuf::from("/data/pcg"));
        c.cache_dir = Some(PathBuf::from("features"));
        c.lr = 0.1 + 0.2;
        c.mode = Branches::BilstmOnly;
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }
}
