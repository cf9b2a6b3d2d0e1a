//! Flat `key = value` experiment files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known; a repeated key is an error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::distill::{DistanceMetric, EmbeddingSource, OptimizerKind, TrainConfig};
use crate::error::{Error, Result};
use crate::mixup::PairingMode;

/// Raw entries with the line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    pub path: PathBuf,
    pub entries: BTreeMap<String, (usize, String)>,
}

pub fn parse_kv(text: &str, path: impl AsRef<Path>) -> Result<KvConfig> {
    let path = path.as_ref().to_path_buf();
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(err("empty key".into()));
        }
        if entries.insert(k.clone(), (i + 1, v)).is_some() {
            return Err(err(format!("duplicate key {k:?}")));
        }
    }
    Ok(KvConfig { path, entries })
}

/// Training, model and data settings of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub num_layers: usize,
    pub student_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
    pub min_freq: usize,
    pub max_vocab: usize,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub schema: Option<String>,
    pub augmented_path: Option<PathBuf>,
    pub fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            num_layers: 4,
            student_layers: 1,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 256,
            max_seq_len: 16,
            dropout_rate: 0.1,
            min_freq: 1,
            max_vocab: 30_000,
            train_path: None,
            dev_path: None,
            schema: None,
            augmented_path: None,
            fraction: 1.0,
        }
    }
}

fn bad(kv: &KvConfig, line: usize, key: &str, v: &str) -> Error {
    Error::Parse {
        path: kv.path.clone(),
        line,
        msg: format!("invalid value {v:?} for {key}"),
    }
}

fn value<T: FromStr>(kv: &KvConfig, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(kv, line, key, v))
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_kv(&parse_kv(&text, path)?)
    }

    /// Applies entries over the defaults. Relative data paths resolve against
    /// the config file's directory.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = Self::default();
        let base = kv.path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base.join(p) }
        };
        let (mut beta1, mut beta2, mut eps) = (0.9, 0.999, 1e-8);
        let mut optimizer = "adam".to_string();
        for (key, (line, v)) in &kv.entries {
            let line = *line;
            let t = &mut c.train;
            match key.as_str() {
                "epochs" => t.epochs = value(kv, line, key, v)?,
                "batch_size" => t.batch_size = value(kv, line, key, v)?,
                "learning_rate" => t.learning_rate = value(kv, line, key, v)?,
                "optimizer" => optimizer = v.to_ascii_lowercase(),
                "adam_beta1" => beta1 = value(kv, line, key, v)?,
                "adam_beta2" => beta2 = value(kv, line, key, v)?,
                "adam_eps" => eps = value(kv, line, key, v)?,
                "seed" => t.seed = value(kv, line, key, v)?,
                "eval_every" => t.eval_every = value(kv, line, key, v)?,
                "max_steps" => t.max_steps = Some(value(kv, line, key, v)?),
                "embedding_source" => {
                    t.embedding_source = match v.as_str() {
                        "per_model" => EmbeddingSource::PerModel,
                        "shared_teacher" => EmbeddingSource::SharedTeacher,
                        _ => return Err(bad(kv, line, key, v)),
                    }
                }
                "exclude_augmented_from_mixup" => t.exclude_augmented_from_mixup = value(kv, line, key, v)?,
                "beta_alpha" => t.mixup.beta_alpha = value(kv, line, key, v)?,
                "mixup_ratio" => t.mixup.mixup_ratio = value(kv, line, key, v)?,
                "pairing" | "pairing_mode" => {
                    t.mixup.pairing = match v.as_str() {
                        "in_batch_shuffle" => PairingMode::InBatchShuffle,
                        "independent_extra" => PairingMode::IndependentExtra,
                        _ => return Err(bad(kv, line, key, v)),
                    }
                }
                "mixup_seed" => t.mixup.seed = value(kv, line, key, v)?,
                "alpha_sm" => t.loss.alpha_sm = value(kv, line, key, v)?,
                "alpha_tmkd" => t.loss.alpha_tmkd = value(kv, line, key, v)?,
                "distance" | "distance_metric" => {
                    t.loss.distance = match v.as_str() {
                        "mse" => DistanceMetric::Mse,
                        "temperature_ce" => DistanceMetric::TemperatureCe,
                        _ => return Err(bad(kv, line, key, v)),
                    }
                }
                "temperature" => t.loss.temperature = value(kv, line, key, v)?,
                "num_layers" | "teacher_layers" => c.num_layers = value(kv, line, key, v)?,
                "student_layers" => c.student_layers = value(kv, line, key, v)?,
                "hidden_dim" => c.hidden_dim = value(kv, line, key, v)?,
                "num_heads" => c.num_heads = value(kv, line, key, v)?,
                "ffn_dim" => c.ffn_dim = value(kv, line, key, v)?,
                "max_seq_len" => c.max_seq_len = value(kv, line, key, v)?,
                "dropout_rate" => c.dropout_rate = value(kv, line, key, v)?,
                "min_freq" => c.min_freq = value(kv, line, key, v)?,
                "max_vocab" => c.max_vocab = value(kv, line, key, v)?,
                "train" => c.train_path = Some(resolve(v)),
                "dev" => c.dev_path = Some(resolve(v)),
                "schema" => c.schema = Some(v.clone()),
                "augmented" => c.augmented_path = Some(resolve(v)),
                "fraction" => c.fraction = value(kv, line, key, v)?,
                _ => {
                    return Err(Error::Parse {
                        path: kv.path.clone(),
                        line,
                        msg: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        c.train.optimizer = match optimizer.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam { beta1, beta2, eps },
            other => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
        };
        c.train.validate()?;
        Ok(c)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let text = "# run\nepochs = 5\nalpha_sm=0.5\npairing = independent_extra\noptimizer = sgd\ntrain = data/train.tsv\n";
        let kv = parse_kv(text, "/tmp/exp/run.cfg").unwrap();
        let c = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.loss.alpha_sm, 0.5);
        assert_eq!(c.train.mixup.pairing, PairingMode::IndependentExtra);
        assert_eq!(c.train.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.train_path.unwrap(), PathBuf::from("/tmp/exp/data/train.tsv"));
    }

    #[test]
    fn unknown_and_duplicate_keys_fail_with_line() {
        let kv = parse_kv("epochs = 2\nlearning_rat = 0.1\n", "x.cfg").unwrap();
        let err = ExperimentConfig::from_kv(&kv).unwrap_err().to_string();
        assert!(err.contains("x.cfg:2") && err.contains("learning_rat"), "{err}");
        assert!(parse_kv("seed=1\nseed=2", "x.cfg").is_err());
        assert!(parse_kv("seed 1", "x.cfg").is_err());
        let kv = parse_kv("pairing = random", "x.cfg").unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }
}
