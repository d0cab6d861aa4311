//! Experiment configuration as flat `section.key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. Every key has a default, so an empty file is a valid
//! configuration. [`ExperimentConfig::to_text`] writes every key in a fixed
//! order and [`ExperimentConfig::hash`] is the SHA-256 of that text with the
//! seed line left out, so runs of one configuration under different seeds
//! share a hash.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 0 | master seed |
//! | `data.dir` | empty | dataset directory; `BINPLAY_DATA` takes precedence |
//! | `data.per_class` | 500 | training samples drawn per class |
//! | `data.groups` | `0,1 2,3 4,5 6,7 8,9` | classes of each batch, space separated |
//! | `data.test_limit` | 0 | evaluate on the first `k` test samples (0 = all) |
//! | `data.sha256.<file>` | none | expected checksum of a dataset file |
//! | `layout.index_bits` | 16 | bits per index subvector |
//! | `layout.index_primes` | `3,5,7,11` | one odd prime per index subvector |
//! | `layout.prefix_bits` | 8 | bits of the batch prefix |
//! | `layout.prefix_prime` | 3 | prime of the batch prefix |
//! | `autoencoder.hidden` | 512 | hidden width of encoder and decoder |
//! | `autoencoder.warmup_epochs` | 5 | reconstruction-only epochs |
//! | `autoencoder.assign_epoch_cap` | 30 | maximum assignment epochs |
//! | `autoencoder.stability_window` | 3 | identical assignments needed to stop early |
//! | `autoencoder.decoder_epochs` | 40 | decoder-only epochs over all indices |
//! | `autoencoder.minibatch` | 64 | |
//! | `autoencoder.lr` | 0.001 | Adam step size |
//! | `autoencoder.reg_weight` | 0.1 | weight of the latent-to-code loss |
//! | `classifier.hidden` | 256 | |
//! | `classifier.epochs` | 10 | passes over each batch |
//! | `classifier.minibatch_current` | 32 | current samples per step |
//! | `classifier.minibatch_replay` | 32 | replayed samples per step |
//! | `classifier.lr` | 0.001 | Adam step size |
//! | `classifier.replay_weight` | `auto` | replay loss weight, `auto` = (K-1)/N |
//! | `classifier.preprocess` | true | train on reconstructions of current samples |
//! | `classifier.soft_targets` | true | distill full distributions, else argmax labels |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::ClassifierConfig;
use crate::codes::CodeLayout;
use crate::error::{Error, Result};
use crate::harness::data::sha256_hex;
use crate::harness::scenario::default_split;
use crate::replay::AutoencoderConfig;

pub const DATA_ENV: &str = "BINPLAY_DATA";

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub per_class: usize,
    pub groups: Vec<Vec<u8>>,
    pub test_limit: usize,
    /// `(file name, sha256)` pairs.
    pub checksums: Vec<(String, String)>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            per_class: 500,
            groups: default_split(),
            test_limit: 0,
            checksums: Vec::new(),
        }
    }
}

impl DataConfig {
    /// `BINPLAY_DATA` if set, then `data.dir`, then `data/mnist`.
    pub fn resolve_dir(&self) -> PathBuf {
        std::env::var_os(DATA_ENV)
            .map(PathBuf::from)
            .or_else(|| self.dir.clone())
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayoutConfig {
    pub index_bits: u32,
    pub index_primes: Vec<u64>,
    pub prefix_bits: u32,
    pub prefix_prime: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            index_bits: 16,
            index_primes: vec![3, 5, 7, 11],
            prefix_bits: 8,
            prefix_prime: 3,
        }
    }
}

impl LayoutConfig {
    pub fn build(&self) -> Result<CodeLayout> {
        CodeLayout::uniform(self.index_bits, &self.index_primes, self.prefix_bits, self.prefix_prime)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub layout: LayoutConfig,
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (d, l, a, c) = (&mut self.data, &mut self.layout, &mut self.autoencoder, &mut self.classifier);
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.dir" => d.dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.per_class" => d.per_class = parse(key, value)?,
            "data.groups" => {
                d.groups = value
                    .split_whitespace()
                    .map(|g| parse_list(key, g))
                    .collect::<Result<_>>()?
            }
            "data.test_limit" => d.test_limit = parse(key, value)?,
            "layout.index_bits" => l.index_bits = parse(key, value)?,
            "layout.index_primes" => l.index_primes = parse_list(key, value)?,
            "layout.prefix_bits" => l.prefix_bits = parse(key, value)?,
            "layout.prefix_prime" => l.prefix_prime = parse(key, value)?,
            "autoencoder.hidden" => a.hidden = parse(key, value)?,
            "autoencoder.warmup_epochs" => a.warmup_epochs = parse(key, value)?,
            "autoencoder.assign_epoch_cap" => a.assign_epoch_cap = parse(key, value)?,
            "autoencoder.stability_window" => a.stability_window = parse(key, value)?,
            "autoencoder.decoder_epochs" => a.decoder_epochs = parse(key, value)?,
            "autoencoder.minibatch" => a.minibatch = parse(key, value)?,
            "autoencoder.lr" => a.lr = parse(key, value)?,
            "autoencoder.reg_weight" => a.reg_weight = parse(key, value)?,
            "classifier.hidden" => c.hidden = parse(key, value)?,
            "classifier.epochs" => c.epochs = parse(key, value)?,
            "classifier.minibatch_current" => c.minibatch_current = parse(key, value)?,
            "classifier.minibatch_replay" => c.minibatch_replay = parse(key, value)?,
            "classifier.lr" => c.lr = parse(key, value)?,
            "classifier.replay_weight" => {
                c.replay_weight = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "classifier.preprocess" => c.preprocess = parse(key, value)?,
            "classifier.soft_targets" => c.soft_targets = parse(key, value)?,
            _ => match key.strip_prefix("data.sha256.") {
                Some(file) if !file.is_empty() => d.checksums.push((file.to_string(), value.to_lowercase())),
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.build()?;
        let positive = [
            ("data.per_class", self.data.per_class),
            ("autoencoder.hidden", self.autoencoder.hidden),
            ("autoencoder.minibatch", self.autoencoder.minibatch),
            ("classifier.hidden", self.classifier.hidden),
            ("classifier.minibatch_current", self.classifier.minibatch_current),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        if self.data.groups.is_empty() || self.data.groups.iter().flatten().any(|&c| c >= 10) {
            return Err(Error::Config("data.groups needs classes below 10".into()));
        }
        for (key, lr) in [("autoencoder.lr", self.autoencoder.lr), ("classifier.lr", self.classifier.lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{key} must be a positive number")));
            }
        }
        if self.classifier.replay_weight.is_some_and(|w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::Config("classifier.replay_weight must be non-negative".into()));
        }
        Ok(())
    }

    fn body(&self) -> String {
        let (d, l, a, c) = (&self.data, &self.layout, &self.autoencoder, &self.classifier);
        let groups: Vec<String> = d.groups.iter().map(|g| join(g)).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("data.dir", d.dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv("data.per_class", d.per_class.to_string());
        kv("data.groups", groups.join(" "));
        kv("data.test_limit", d.test_limit.to_string());
        for (file, sum) in &d.checksums {
            kv(&format!("data.sha256.{file}"), sum.clone());
        }
        kv("layout.index_bits", l.index_bits.to_string());
        kv("layout.index_primes", join(&l.index_primes));
        kv("layout.prefix_bits", l.prefix_bits.to_string());
        kv("layout.prefix_prime", l.prefix_prime.to_string());
        kv("autoencoder.hidden", a.hidden.to_string());
        kv("autoencoder.warmup_epochs", a.warmup_epochs.to_string());
        kv("autoencoder.assign_epoch_cap", a.assign_epoch_cap.to_string());
        kv("autoencoder.stability_window", a.stability_window.to_string());
        kv("autoencoder.decoder_epochs", a.decoder_epochs.to_string());
        kv("autoencoder.minibatch", a.minibatch.to_string());
        kv("autoencoder.lr", a.lr.to_string());
        kv("autoencoder.reg_weight", a.reg_weight.to_string());
        kv("classifier.hidden", c.hidden.to_string());
        kv("classifier.epochs", c.epochs.to_string());
        kv("classifier.minibatch_current", c.minibatch_current.to_string());
        kv("classifier.minibatch_replay", c.minibatch_replay.to_string());
        kv("classifier.lr", c.lr.to_string());
        kv(
            "classifier.replay_weight",
            c.replay_weight.map_or_else(|| "auto".to_string(), |w| w.to_string()),
        );
        kv("classifier.preprocess", c.preprocess.to_string());
        kv("classifier.soft_targets", c.soft_targets.to_string());
        out
    }

    /// Every key, one per line, in a fixed order. Parses back to `self`.
    pub fn to_text(&self) -> String {
        format!("seed = {}\n{}", self.seed, self.body())
    }

    /// Hex SHA-256 of the canonical text without the seed.
    pub fn hash(&self) -> String {
        sha256_hex(self.body().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::default().layout.build().unwrap().len(), 72);
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "# quick run\nseed = 9\ndata.groups = 0,1 2,3\nclassifier.replay_weight = 0.25\n\
                    data.sha256.train-images-idx3-ubyte = ABCD\nautoencoder.lr = 0.002\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.data.groups, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(cfg.classifier.replay_weight, Some(0.25));
        assert_eq!(cfg.data.checksums[0].1, "abcd");
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seed: 5, ..a.clone() };
        let mut c = a.clone();
        c.classifier.epochs += 1;
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "nonsense",
            "unknown.key = 1",
            "seed = 1\nseed = 2",
            "autoencoder.hidden = -3",
            "autoencoder.minibatch = 0",
            "layout.index_primes = 3,3",
            "classifier.lr = 0",
            "data.groups = 0,12",
            "classifier.preprocess = yes",
        ] {
            let err = ExperimentConfig::parse(bad).unwrap_err();
            assert!(matches!(err, Error::Config(_) | Error::InvalidSpec(_)), "{bad}: {err}");
        }
    }
}
