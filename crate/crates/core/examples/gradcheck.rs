//! Finite-difference check of the tape on a few primitives and on the full
//! distillation loss of a tiny 2-layer model, one parameter array at a time.

use mixkd::distill::{loss_mle, loss_sm, loss_tmkd, total_loss, LossWeights};
use mixkd::mixup::mix_batch;
use mixkd::model::{embed, forward_from_embeddings, forward_tokens, ModelConfig, ModelParams, ParamVars};
use mixkd::tensor::{finite_diff_check, Tensor};
use mixkd::data::Batch;

fn main() -> anyhow::Result<()> {
    let x = Tensor::new(vec![2, 3], vec![0.3, -1.2, 0.7, 2.0, 0.1, -0.4])?;
    let r = finite_diff_check(
        |t, v| {
            let s = t.softmax(v, 1)?;
            let g = t.gelu(s)?;
            t.sum(g)
        },
        &x,
        1e-4,
        1e-4,
    )?;
    println!("softmax∘gelu: max rel err {:.2e}", r.max_rel_err);

    let cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        vocab_size: 12,
        max_seq_len: 6,
        num_classes: 2,
        dropout_rate: 0.0,
    };
    let params = ModelParams::init_random(&cfg, 3)?;
    let arrays: Vec<Tensor> = params.arrays().into_iter().cloned().collect();
    let teacher = ModelParams::init_random(&cfg, 9)?;
    let batch = Batch {
        ids: vec![2, 4, 5, 6, 0, 0, 2, 7, 8, 9, 10, 0],
        mask: vec![true, true, true, true, false, false, true, true, true, true, true, false],
        labels: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])?,
        indices: vec![0, 1],
        n: 2,
        seq_len: 6,
    };
    let teacher_logits = teacher.logits(&batch)?;
    let weights = LossWeights::default();

    let mut worst: f64 = 0.0;
    for group in 0..arrays.len() {
        let r = finite_diff_check(
            |tape, x| {
                let p = ModelParams::from_arrays(cfg.clone(), arrays.clone())?;
                let mut vars = ParamVars::register(tape, &p, false);
                vars.replace(group, x);
                let logits = forward_tokens(tape, &vars, &batch, None)?;
                let mle = loss_mle(tape, logits, &batch.labels)?;
                let e = embed(tape, &vars, &batch.ids, &batch.mask, 2)?;
                let swapped_ids: Vec<usize> = batch.ids[6..].iter().chain(&batch.ids[..6]).copied().collect();
                let swapped_mask: Vec<bool> = batch.mask[6..].iter().chain(&batch.mask[..6]).copied().collect();
                let swapped_labels = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0])?;
                let e2 = embed(tape, &vars, &swapped_ids, &swapped_mask, 2)?;
                let mixed = mix_batch(tape, e, e2, &batch.mask, &swapped_mask, &batch.labels, &swapped_labels, &[0.3, 0.8])?;
                let s_logits = forward_from_embeddings(tape, &vars, mixed.emb, &mixed.mask, None)?;
                let sm = loss_sm(tape, s_logits, &mixed.labels)?;
                let t = tape.constant(teacher_logits.clone());
                let tm = loss_tmkd(tape, t, s_logits, &weights)?;
                Ok(total_loss(tape, mle, Some(sm), Some(tm), 1.0, 1.0)?.0)
            },
            &arrays[group],
            1e-4,
            1e-4,
        )?;
        worst = worst.max(r.max_rel_err);
        if !r.passed {
            println!("array {group} failed: rel err {:.2e}", r.max_rel_err);
        }
    }
    println!("total loss over {} arrays: worst rel err {worst:.2e}", arrays.len());
    Ok(())
}
