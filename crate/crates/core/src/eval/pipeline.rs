//! Glue from an experiment file to encoded splits and model configs.

use std::path::{Path, PathBuf};

use super::ExperimentConfig;
use crate::data::{load_tsv, merge_augmented, Schema};
use crate::data::{subsample, Dataset, Encoded, Vocab};
use crate::distill::Splits;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};

/// Datasets ready for training, with the vocabulary and label names used.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub splits: Splits,
    pub vocab: Vocab,
    pub labels: Vec<String>,
}

impl ExperimentConfig {
    pub fn schema(&self) -> Result<Schema> {
        self.schema
            .as_deref()
            .ok_or_else(|| Error::Config("no schema given".into()))?
            .parse()
    }

    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            vocab_size,
            max_seq_len: self.max_seq_len,
            num_classes,
            dropout_rate: self.dropout_rate,
        }
    }

    /// Loads the training file (subsampled by `fraction`, then extended with
    /// every augmented row) and the dev file. With a checkpoint, its vocabulary
    /// and label order are reused; otherwise both are built from the data.
    pub fn prepare(&self, train_override: Option<&Path>, reuse: Option<&Checkpoint>) -> Result<Prepared> {
        let mut schema = self.schema()?;
        if let Some(labels) = reuse.and_then(|c| c.labels.as_ref()) {
            schema = schema.with_labels(labels);
        }
        let train_path: PathBuf = train_override
            .map(Path::to_path_buf)
            .or_else(|| self.train_path.clone())
            .ok_or_else(|| Error::Config("no training data given".into()))?;
        let full = load_tsv(&train_path, &schema)?;
        let schema = schema.with_labels(&full.labels);
        let mut train = Dataset {
            examples: subsample(&full.examples, self.fraction, self.train.seed)?,
            labels: full.labels.clone(),
        };
        if let Some(aug) = &self.augmented_path {
            // origin indices refer to the full file, so resolve labels there
            let merged = merge_augmented(&full, aug, &schema)?;
            train.examples.extend(merged.examples.into_iter().filter(|e| e.augmented));
        }
        let vocab = match reuse.and_then(|c| c.vocab.clone()) {
            Some(tokens) => Vocab::from_tokens(tokens)?,
            None => Vocab::build(&train.examples, self.min_freq, self.max_vocab)?,
        };
        let c = train.labels.len();
        let dev = match &self.dev_path {
            Some(p) => Some(Encoded::new(&load_tsv(p, &schema)?.examples, &vocab, self.max_seq_len, c)?),
            None => None,
        };
        Ok(Prepared {
            splits: Splits {
                train: Encoded::new(&train.examples, &vocab, self.max_seq_len, c)?,
                dev,
            },
            vocab,
            labels: train.labels,
        })
    }
}
