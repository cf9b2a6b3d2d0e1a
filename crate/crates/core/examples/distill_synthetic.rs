//! Trains a 4-layer teacher on the synthetic key-token task, then distills a
//! 1-layer student with each variant and prints dev accuracy.
//!
//! Usage: cargo run --release --example distill_synthetic [seeds] [student_epochs]

use std::time::Instant;

use mixkd::data::synthetic::SyntheticTask;
use mixkd::data::{Encoded, Vocab};
use mixkd::distill::{distill_student, train_teacher, Splits, TrainConfig, Variant};
use mixkd::model::ModelConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let student_epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let task = SyntheticTask::default();
    let (train, dev) = task.splits(2000, 500, 17);
    let vocab = Vocab::build(&train.examples, 1, 10_000)?;
    let seq_len = 16;
    let splits = Splits {
        train: Encoded::new(&train.examples, &vocab, seq_len, 2)?,
        dev: Some(Encoded::new(&dev.examples, &vocab, seq_len, 2)?),
    };
    let teacher_cfg = ModelConfig {
        num_layers: 4,
        hidden_dim: 64,
        num_heads: 4,
        ffn_dim: 256,
        vocab_size: vocab.len(),
        max_seq_len: seq_len,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let t0 = Instant::now();
    let teacher_train = TrainConfig {
        epochs: 6,
        ..Default::default()
    };
    let (teacher, rec) = train_teacher(&teacher_cfg, &teacher_train, &splits)?;
    println!(
        "teacher: dev accuracy {:.4} (best step {}) in {:.1}s",
        rec.final_accuracy().unwrap_or(0.0),
        rec.best_step,
        t0.elapsed().as_secs_f64()
    );

    let student_cfg = teacher_cfg.with_layers(1);
    for variant in [Variant::Ft, Variant::Tmkd, Variant::SmTmkd] {
        let mut accs = Vec::new();
        let t = Instant::now();
        for seed in 0..seeds {
            let cfg = TrainConfig {
                epochs: student_epochs,
                seed,
                ..Default::default()
            };
            let (_, r) = distill_student(&cfg, &splits, &teacher, &student_cfg, variant)?;
            accs.push(r.final_accuracy().unwrap_or(0.0));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!(
            "{variant:>8}: mean dev accuracy {mean:.4} over {seeds} seeds {accs:.3?} ({:.1}s)",
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
