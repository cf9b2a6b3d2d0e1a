//! Metrics, evaluation and the experiment utilities built on them.

use serde::{Deserialize, Serialize};

use crate::data::Encoded;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

mod bench;
mod config;
mod export;
mod pipeline;
mod sweep;

pub use bench::{random_batch, throughput_bench, BenchReport};
pub use config::{parse_kv, ExperimentConfig, KvConfig};
pub use export::{balanced_sample, export_cls_features, export_rows, FeatureRow};
pub use pipeline::Prepared;
pub use sweep::{sweep_grid, SweepCell, SweepGrid, SweepTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Binary F1 of the positive class, when one was requested.
    pub f1: Option<f64>,
    /// True when F1 was defined as 0 because precision + recall = 0.
    #[serde(default)]
    pub f1_degenerate: bool,
    pub n_eval: usize,
}

/// Confusion counts accumulated over predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub correct: usize,
    pub total: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: usize, actual: usize, positive: Option<usize>) {
        self.total += 1;
        if predicted == actual {
            self.correct += 1;
        }
        if let Some(p) = positive {
            match (predicted == p, actual == p) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn metrics(&self, num_classes: usize, positive: Option<usize>) -> Metrics {
        let accuracy = if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        };
        let (mut f1, mut degenerate) = (None, false);
        if num_classes == 2 && positive.is_some() {
            let precision = ratio(self.tp, self.tp + self.fp);
            let recall = ratio(self.tp, self.tp + self.fn_);
            if precision + recall == 0.0 {
                degenerate = true;
                f1 = Some(0.0);
            } else {
                f1 = Some(2.0 * precision * recall / (precision + recall));
            }
        }
        Metrics {
            accuracy,
            f1,
            f1_degenerate: degenerate,
            n_eval: self.total,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax predictions against integer labels.
pub fn compute_metrics(logits: &Tensor, labels: &[usize], positive_class: Option<usize>) -> Result<Metrics> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "compute_metrics",
            left: logits.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    let c = logits.shape()[1];
    let mut conf = Confusion::default();
    for (r, &y) in labels.iter().enumerate() {
        conf.add(argmax(logits.row(r)), y, positive_class);
    }
    Ok(conf.metrics(c, positive_class))
}

/// Eval-mode metrics over every example of `data` exactly once, in order.
pub fn evaluate(params: &ModelParams, data: &Encoded, batch_size: usize, positive_class: Option<usize>) -> Result<Metrics> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if data.num_classes != params.config.num_classes {
        return Err(Error::Config(format!(
            "data has {} classes, model has {}",
            data.num_classes, params.config.num_classes
        )));
    }
    let mut conf = Confusion::default();
    for batch in data.batches(batch_size, None) {
        let logits = params.logits(&batch)?;
        for (r, &i) in batch.indices.iter().enumerate() {
            conf.add(argmax(logits.row(r)), data.labels[i], positive_class);
        }
    }
    Ok(conf.metrics(data.num_classes, positive_class))
}
