//! Mixes the embeddings of two sentences of different lengths and shows the
//! interpolated labels, the mask union and the padded tail.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixkd::data::{Encoded, Example, Vocab};
use mixkd::mixup::{materialize, sample_lambda, MixupConfig, MixupSpec};
use mixkd::model::{embed, ModelConfig, ModelParams, ParamVars};
use mixkd::tensor::Tape;

fn main() -> anyhow::Result<()> {
    let examples = vec![
        Example::new("a quietly moving little film", 1),
        Example::new("dull", 0),
    ];
    let vocab = Vocab::build(&examples, 1, 100)?;
    let data = Encoded::new(&examples, &vocab, 8, 2)?;
    let cfg = ModelConfig {
        num_layers: 1,
        hidden_dim: 4,
        num_heads: 1,
        ffn_dim: 8,
        vocab_size: vocab.len(),
        max_seq_len: 8,
        num_classes: 2,
        dropout_rate: 0.0,
    };
    let params = ModelParams::init_random(&cfg, 0)?;
    let mix = MixupConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let draws: Vec<f64> = (0..6).map(|_| sample_lambda(&mix, &mut rng)).collect();
    println!("lambda draws from Beta(0.4, 0.4): {draws:.3?}");

    let batch = data.batch(&[0, 1]);
    let lambda = sample_lambda(&mix, &mut rng);
    let specs = [
        MixupSpec { index_i: 0, index_j: 1, j_in_pool: false, lambda },
        MixupSpec { index_i: 1, index_j: 0, j_in_pool: false, lambda: 1.0 - lambda },
    ];
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params, false);
    let mixed = materialize(&mut tape, &vars, &data, &batch, &specs, &[])?;
    let plain = embed(&mut tape, &vars, &batch.ids, &batch.mask, 2)?;
    let (emb, plain) = (tape.value(mixed.emb), tape.value(plain));
    let row = 8 * cfg.hidden_dim;
    for (r, s) in specs.iter().enumerate() {
        let mask: String = mixed.mask[r * 8..(r + 1) * 8].iter().map(|&m| if m { '1' } else { '0' }).collect();
        println!("row {r}: {} mixed with {}, lambda {:.3}, soft label {:.3?}, mask {mask}", s.index_i, s.index_j, s.lambda, mixed.labels.row(r));
    }
    // positions 3..6 are padding in the short sentence, so only the long one contributes
    let tail = 3 * cfg.hidden_dim..6 * cfg.hidden_dim;
    let err = tail
        .map(|k| (emb.data()[k] - lambda * plain.data()[k]).abs())
        .fold(0.0, f64::max);
    println!("padded tail equals lambda times the long sentence: max err {err:.1e}");
    let sym = (0..row).map(|k| (emb.data()[k] - emb.data()[row + k]).abs()).fold(0.0, f64::max);
    println!("mix(0,1,l) vs mix(1,0,1-l): max diff {sym:.1e}");
    Ok(())
}
