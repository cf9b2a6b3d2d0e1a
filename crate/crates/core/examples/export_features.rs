//! Writes [CLS] features of a class-balanced sample and its mixup children to
//! CSV, e.g. for a 2-D projection plot.
//!
//! Usage: cargo run --release --example export_features [out.csv]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixkd::data::synthetic::SyntheticTask;
use mixkd::data::{Encoded, Vocab};
use mixkd::distill::{train_teacher, Splits, TrainConfig};
use mixkd::eval::{balanced_sample, export_cls_features};
use mixkd::mixup::{make_pairs, MixupConfig};
use mixkd::model::ModelConfig;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "features.csv".into());
    let (train, dev) = SyntheticTask::default().splits(800, 200, 3);
    let vocab = Vocab::build(&train.examples, 1, 10_000)?;
    let splits = Splits {
        train: Encoded::new(&train.examples, &vocab, 16, 2)?,
        dev: Some(Encoded::new(&dev.examples, &vocab, 16, 2)?),
    };
    let cfg = ModelConfig {
        num_layers: 1,
        hidden_dim: 16,
        num_heads: 2,
        ffn_dim: 32,
        vocab_size: vocab.len(),
        max_seq_len: 16,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let (model, _) = train_teacher(&cfg, &TrainConfig { epochs: 3, ..Default::default() }, &splits)?;
    let dev = splits.dev.as_ref().expect("dev split");
    let picked = balanced_sample(dev, 100, 0);
    let mix = MixupConfig {
        mixup_ratio: 2,
        ..Default::default()
    };
    let specs = make_pairs(picked.len(), &mix, &mut ChaCha8Rng::seed_from_u64(0), 0)?;
    let rows = export_cls_features(&model, dev, &picked, &specs, &out)?;
    println!("wrote {rows} rows ({} originals, {} mixed) to {out}", picked.len(), specs.len());
    Ok(())
}
