//! Saves a model, reloads it and saves again, then compares bytes and logits.

use mixkd::eval::random_batch;
use mixkd::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams};

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 32,
        num_heads: 4,
        ffn_dim: 64,
        vocab_size: 300,
        max_seq_len: 16,
        num_classes: 3,
        dropout_rate: 0.1,
    };
    let params = ModelParams::init_random(&cfg, 11)?;
    let dir = std::env::temp_dir().join(format!("mixkd-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (a, b) = (dir.join("a.ckpt"), dir.join("b.ckpt"));

    let mut ckpt = Checkpoint::new(params.clone());
    ckpt.labels = Some(vec!["neg".into(), "neu".into(), "pos".into()]);
    save_checkpoint(&ckpt, &a)?;
    let loaded = load_checkpoint(&a)?;
    save_checkpoint(&loaded, &b)?;
    let identical = std::fs::read(&a)? == std::fs::read(&b)?;

    let batch = random_batch(cfg.vocab_size, cfg.num_classes, 8, cfg.max_seq_len, 0);
    let drift = params.logits(&batch)?.max_abs_diff(&loaded.params.logits(&batch)?);
    println!("{} bytes, second save identical: {identical}", std::fs::metadata(&a)?.len());
    println!("max logit drift after reload: {drift:.2e}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
