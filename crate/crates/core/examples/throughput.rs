//! Forward throughput and parameter count as depth grows, at batch size 16.
//!
//! Usage: cargo run --release --example throughput [hidden_dim]

use mixkd::eval::{random_batch, throughput_bench};
use mixkd::model::{ModelConfig, ModelParams};

fn main() -> anyhow::Result<()> {
    let d: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(64);
    let base = ModelConfig {
        num_layers: 12,
        hidden_dim: d,
        num_heads: 4,
        ffn_dim: 4 * d,
        vocab_size: 2000,
        max_seq_len: 32,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    let batch = random_batch(base.vocab_size, 2, 16, base.max_seq_len, 0);
    println!("layers\tparams\tsamples/s");
    for layers in [12, 6, 3, 1] {
        let p = ModelParams::init_random(&base.with_layers(layers), 0)?;
        let r = throughput_bench(&p, &batch, 2, 10)?;
        println!("{layers}\t{}\t{:.1}", r.param_count, r.samples_per_second);
    }
    let bert = ModelConfig {
        num_layers: 12,
        hidden_dim: 768,
        num_heads: 12,
        ffn_dim: 3072,
        vocab_size: 30522,
        max_seq_len: 512,
        num_classes: 2,
        dropout_rate: 0.1,
    };
    println!("BERT-base sized config: {} parameters (3 layers: {})", bert.param_count(), bert.with_layers(3).param_count());
    Ok(())
}
