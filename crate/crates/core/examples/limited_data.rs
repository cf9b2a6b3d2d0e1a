//! FT against SM+TMKD students when only a fraction of the training set is
//! available. The teacher always sees the full set.
//!
//! Usage: cargo run --release --example limited_data [fraction] [seeds]

use mixkd::data::synthetic::SyntheticTask;
use mixkd::data::{subsample, Encoded, Vocab};
use mixkd::distill::{run_seeds, train_teacher, Splits, TrainConfig, Variant};
use mixkd::model::ModelConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let fraction: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.1);
    let n_seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let (train, dev) = SyntheticTask::default().splits(2000, 500, 17);
    let vocab = Vocab::build(&train.examples, 1, 10_000)?;
    let dev = Encoded::new(&dev.examples, &vocab, 16, 2)?;
    let full = Splits {
        train: Encoded::new(&train.examples, &vocab, 16, 2)?,
        dev: Some(dev.clone()),
    };
    let teacher_cfg = ModelConfig {
        num_layers: 4,
        hidden_dim: 64,
        num_heads: 4,
        ffn_dim: 256,
        vocab_size: vocab.len(),
        max_seq_len: 16,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let (teacher, rec) = train_teacher(&teacher_cfg, &TrainConfig { epochs: 6, ..Default::default() }, &full)?;
    println!("teacher dev accuracy {:.4}", rec.final_accuracy().unwrap_or(0.0));

    let small = Splits {
        train: Encoded::new(&subsample(&train.examples, fraction, 0)?, &vocab, 16, 2)?,
        dev: Some(dev),
    };
    println!("{} of {} training examples", small.train.len(), train.examples.len());
    // fewer examples per epoch, so more epochs for a comparable step count
    let cfg = TrainConfig {
        epochs: (3.0 / fraction).round().clamp(3.0, 30.0) as usize,
        batch_size: 16,
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..n_seeds.max(2)).collect();
    let student_cfg = teacher_cfg.with_layers(1);
    let ft = run_seeds(&cfg, &small, &teacher, &student_cfg, Variant::Ft, &seeds)?;
    let mix = run_seeds(&cfg, &small, &teacher, &student_cfg, Variant::SmTmkd, &seeds)?;
    println!("FT      {}", ft.accuracy);
    println!("SM+TMKD {}", mix.accuracy);
    println!("gap {:+.2} points", 100.0 * (mix.accuracy.mean - ft.accuracy.mean));
    Ok(())
}
