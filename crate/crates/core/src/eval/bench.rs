use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, CLS, RESERVED};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples_per_second: f64,
    pub param_count: u64,
    pub batch_size: usize,
    pub measured_batches: usize,
    pub seconds: f64,
}

/// Eval-mode forward throughput on `batch`, after `warmup` untimed passes.
pub fn throughput_bench(params: &ModelParams, batch: &Batch, warmup: usize, measured_batches: usize) -> Result<BenchReport> {
    if measured_batches == 0 {
        return Err(Error::Config("measured_batches must be at least 1".into()));
    }
    for _ in 0..warmup {
        params.logits(batch)?;
    }
    let start = Instant::now();
    for _ in 0..measured_batches {
        std::hint::black_box(params.logits(batch)?);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        samples_per_second: (batch.n * measured_batches) as f64 / seconds.max(1e-12),
        param_count: params.param_count(),
        batch_size: batch.n,
        measured_batches,
        seconds,
    })
}

/// Full-length rows of random non-reserved tokens.
pub fn random_batch(vocab_size: usize, num_classes: usize, batch_size: usize, seq_len: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(batch_size * seq_len);
    for _ in 0..batch_size {
        ids.push(CLS);
        for _ in 1..seq_len {
            ids.push(rng.random_range(RESERVED.len()..vocab_size.max(RESERVED.len() + 1)));
        }
    }
    let mut labels = vec![0.0; batch_size * num_classes];
    for r in 0..batch_size {
        labels[r * num_classes + rng.random_range(0..num_classes)] = 1.0;
    }
    Batch {
        ids,
        mask: vec![true; batch_size * seq_len],
        labels: Tensor::from_parts(vec![batch_size, num_classes], labels),
        indices: (0..batch_size).collect(),
        n: batch_size,
        seq_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn reports_rate_and_count() {
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            vocab_size: 20,
            max_seq_len: 8,
            num_classes: 2,
            dropout_rate: 0.0,
        };
        let params = ModelParams::init_random(&cfg, 0).unwrap();
        let batch = random_batch(20, 2, 4, 8, 1);
        batch.validate().unwrap();
        let r = throughput_bench(&params, &batch, 1, 2).unwrap();
        assert!(r.samples_per_second > 0.0);
        assert_eq!(r.param_count, cfg.param_count());
        assert!(throughput_bench(&params, &batch, 0, 0).is_err());
    }
}
