#![allow(dead_code)]

pub mod mixup_cases;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixkd::data::synthetic::SyntheticTask;
use mixkd::data::{Encoded, Vocab};
use mixkd::distill::{loss_mle, total_loss, Optimizer, Splits, TrainConfig};
use mixkd::model::{forward_tokens, ModelConfig, ModelParams, ParamVars};
use mixkd::tensor::Tape;

pub const SEQ_LEN: usize = 16;

/// Encoded train/dev splits of the synthetic key-token task and the
/// vocabulary size.
pub fn synthetic_splits(train: usize, dev: usize, seed: u64) -> (Splits, usize) {
    let (tr, dv) = SyntheticTask::default().splits(train, dev, seed);
    let vocab = Vocab::build(&tr.examples, 1, 10_000).unwrap();
    let splits = Splits {
        train: Encoded::new(&tr.examples, &vocab, SEQ_LEN, 2).unwrap(),
        dev: Some(Encoded::new(&dv.examples, &vocab, SEQ_LEN, 2).unwrap()),
    };
    (splits, vocab.len())
}

pub fn model(vocab_size: usize, layers: usize, d: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        num_layers: layers,
        hidden_dim: d,
        num_heads: heads,
        ffn_dim: 4 * d,
        vocab_size,
        max_seq_len: SEQ_LEN,
        num_classes: 2,
        dropout_rate: 0.1,
    }
}

/// Same seed mixing as the trainer's internal streams.
pub fn stream(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A hand-written MLE loop with the same data order and dropout streams.
pub fn plain_loop(init: &ModelParams, cfg: &TrainConfig, data: &Encoded, steps: usize) -> (Vec<f64>, ModelParams) {
    let mut params = init.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut drop = ChaCha8Rng::seed_from_u64(stream(cfg.seed, 2, 0));
    let mut losses = Vec::new();
    'outer: for epoch in 0..cfg.epochs {
        for batch in data.batches(cfg.batch_size, Some(stream(cfg.seed, 1, epoch as u64))) {
            if losses.len() == steps {
                break 'outer;
            }
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &params, true);
            let logits = forward_tokens(&mut tape, &vars, &batch, Some(&mut drop)).unwrap();
            let mle = loss_mle(&mut tape, logits, &batch.labels).unwrap();
            let (total, _) = total_loss(&mut tape, mle, None, None, 0.0, 0.0).unwrap();
            losses.push(tape.value(total).item());
            tape.backward(total).unwrap();
            opt.step(&mut params, &vars.grads(&tape)).unwrap();
        }
    }
    (losses, params)
}
