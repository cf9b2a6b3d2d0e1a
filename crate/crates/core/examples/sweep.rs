//! Trains a student for every (alpha_sm, alpha_tmkd) pair on a small grid and
//! prints the accuracy table and its spread.
//!
//! Usage: cargo run --release --example sweep [out_dir]

use mixkd::data::synthetic::SyntheticTask;
use mixkd::data::{Encoded, Vocab};
use mixkd::distill::{train_teacher, Splits, TrainConfig};
use mixkd::eval::{sweep_grid, SweepGrid};
use mixkd::model::ModelConfig;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1);
    let (train, dev) = SyntheticTask::default().splits(1000, 300, 17);
    let vocab = Vocab::build(&train.examples, 1, 10_000)?;
    let splits = Splits {
        train: Encoded::new(&train.examples, &vocab, 16, 2)?,
        dev: Some(Encoded::new(&dev.examples, &vocab, 16, 2)?),
    };
    let teacher_cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 32,
        num_heads: 4,
        ffn_dim: 64,
        vocab_size: vocab.len(),
        max_seq_len: 16,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let base = TrainConfig {
        epochs: 4,
        ..Default::default()
    };
    let (teacher, rec) = train_teacher(&teacher_cfg, &base, &splits)?;
    println!("teacher dev accuracy {:.4}", rec.final_accuracy().unwrap_or(0.0));

    let grid = SweepGrid {
        alpha_sm_values: vec![0.1, 0.5, 1.0],
        alpha_tmkd_values: vec![0.1, 0.5, 1.0],
        mixup_ratio_values: vec![1],
        base: TrainConfig { epochs: 2, ..base },
    };
    let table = sweep_grid(&grid, &splits, &teacher, &teacher_cfg.with_layers(1))?;
    print!("{}", table.to_tsv());
    if let Some(s) = table.accuracy_spread() {
        println!("spread {:.2} points", 100.0 * s);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        table.write(&dir)?;
    }
    Ok(())
}
