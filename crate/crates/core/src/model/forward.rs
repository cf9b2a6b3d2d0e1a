use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelParams, LAYER_ARRAYS, LAYER_NORM_EPS};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Additive score for attention to a padded key.
pub const MASKED_SCORE: f64 = -1e9;

/// Dropout randomness for a training forward pass; `None` means eval mode.
pub type Dropout<'a> = Option<&'a mut ChaCha8Rng>;

/// Offsets of each array within a layer's block of 16 vars.
#[derive(Clone, Copy)]
struct LayerVars<'a>(&'a [Var]);

impl LayerVars<'_> {
    fn wq(&self) -> Var { self.0[0] }
    fn bq(&self) -> Var { self.0[1] }
    fn wk(&self) -> Var { self.0[2] }
    fn bk(&self) -> Var { self.0[3] }
    fn wv(&self) -> Var { self.0[4] }
    fn bv(&self) -> Var { self.0[5] }
    fn wo(&self) -> Var { self.0[6] }
    fn bo(&self) -> Var { self.0[7] }
    fn ln1(&self) -> (Var, Var) { (self.0[8], self.0[9]) }
    fn ffn1(&self) -> (Var, Var) { (self.0[10], self.0[11]) }
    fn ffn2(&self) -> (Var, Var) { (self.0[12], self.0[13]) }
    fn ln2(&self) -> (Var, Var) { (self.0[14], self.0[15]) }
}

/// A model's arrays registered on a tape, in canonical order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub config: ModelConfig,
    all: Vec<Var>,
}

impl ParamVars {
    /// Records every array as a leaf. Frozen models register with
    /// `trainable = false` and never receive gradients.
    pub fn register(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let all = params
            .arrays()
            .into_iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        Self {
            config: params.config.clone(),
            all,
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.all
    }

    /// Substitutes the var at canonical position `index`, e.g. to probe one
    /// array with a gradient check.
    pub fn replace(&mut self, index: usize, var: Var) {
        self.all[index] = var;
    }

    fn token_embedding(&self) -> Var {
        self.all[0]
    }

    fn position_embedding(&self) -> Var {
        self.all[1]
    }

    fn num_layers(&self) -> usize {
        (self.all.len() - 4) / LAYER_ARRAYS
    }

    fn layer(&self, l: usize) -> LayerVars<'_> {
        LayerVars(&self.all[2 + l * LAYER_ARRAYS..2 + (l + 1) * LAYER_ARRAYS])
    }

    fn classifier(&self) -> (Var, Var) {
        let n = self.all.len();
        (self.all[n - 2], self.all[n - 1])
    }

    /// Gradients in canonical order; arrays the loss never touched get zeros.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.all
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
            })
            .collect()
    }
}

fn check_mask(mask: &[bool], n: usize, seq_len: usize) -> Result<()> {
    if mask.len() != n * seq_len {
        return Err(Error::ShapeMismatch {
            op: "pad_mask",
            left: vec![n, seq_len],
            right: vec![mask.len()],
        });
    }
    Ok(())
}

/// Token plus position embedding at real positions and the exact zero vector
/// at padded ones. `ids` and `mask` are row-major `n × seq_len`.
pub fn embed(tape: &mut Tape, vars: &ParamVars, ids: &[usize], mask: &[bool], n: usize) -> Result<Var> {
    let cfg = &vars.config;
    let seq_len = if n == 0 { 0 } else { ids.len() / n };
    if n == 0 || seq_len * n != ids.len() || seq_len > cfg.max_seq_len {
        return Err(Error::Config(format!(
            "cannot embed {} ids as {n} rows with max_seq_len {}",
            ids.len(),
            cfg.max_seq_len
        )));
    }
    check_mask(mask, n, seq_len)?;
    let d = cfg.hidden_dim;
    let tok = tape.gather_rows(vars.token_embedding(), ids)?;
    let positions: Vec<usize> = (0..n).flat_map(|_| 0..seq_len).collect();
    let pos = tape.gather_rows(vars.position_embedding(), &positions)?;
    let sum = tape.add(tok, pos)?;
    let keep: Vec<f64> = mask
        .iter()
        .flat_map(|&m| std::iter::repeat_n(if m { 1.0 } else { 0.0 }, d))
        .collect();
    let keep = tape.constant(Tensor::from_parts(vec![n * seq_len, d], keep));
    let masked = tape.mul(sum, keep)?;
    tape.reshape(masked, &[n, seq_len, d])
}

fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut Dropout) -> Result<Var> {
    let Some(rng) = rng.as_deref_mut() else {
        return Ok(x);
    };
    if rate == 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x).to_vec();
    let numel = shape.iter().product();
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..numel)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Tensor::from_parts(shape, mask));
    tape.mul(x, mask)
}

/// `[n×t×d] → [n·h × t × d/h]`
fn split_heads(tape: &mut Tape, x: Var, n: usize, t: usize, cfg: &ModelConfig) -> Result<Var> {
    let (h, dh) = (cfg.num_heads, cfg.head_dim());
    let r = tape.reshape(x, &[n, t, h, dh])?;
    let p = tape.permute(r, &[0, 2, 1, 3])?;
    tape.reshape(p, &[n * h, t, dh])
}

fn merge_heads(tape: &mut Tape, x: Var, n: usize, t: usize, cfg: &ModelConfig) -> Result<Var> {
    let (h, dh) = (cfg.num_heads, cfg.head_dim());
    let r = tape.reshape(x, &[n, h, t, dh])?;
    let p = tape.permute(r, &[0, 2, 1, 3])?;
    tape.reshape(p, &[n, t, h * dh])
}

/// One post-norm encoder layer. With `cls_only` only position 0 is used as a
/// query, giving `[n×1×d]`; keys and values always span the full sequence.
#[allow(clippy::too_many_arguments)]
fn encoder_layer(
    tape: &mut Tape,
    lv: LayerVars,
    cfg: &ModelConfig,
    x: Var,
    mask: &[bool],
    n: usize,
    seq_len: usize,
    cls_only: bool,
    rng: &mut Dropout,
) -> Result<Var> {
    let tq = if cls_only { 1 } else { seq_len };
    let xq = if cls_only { tape.narrow(x, 1, 0, 1)? } else { x };

    let q = tape.linear(xq, lv.wq(), lv.bq())?;
    let q = split_heads(tape, q, n, tq, cfg)?;
    let k = tape.linear(x, lv.wk(), lv.bk())?;
    let k = split_heads(tape, k, n, seq_len, cfg)?;
    let v = tape.linear(x, lv.wv(), lv.bv())?;
    let v = split_heads(tape, v, n, seq_len, cfg)?;

    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (cfg.head_dim() as f64).sqrt())?;
    let h = cfg.num_heads;
    let mut bias = Vec::with_capacity(n * h * tq * seq_len);
    for row in mask.chunks_exact(seq_len) {
        for _ in 0..h * tq {
            bias.extend(row.iter().map(|&m| if m { 0.0 } else { MASKED_SCORE }));
        }
    }
    let bias = tape.constant(Tensor::from_parts(vec![n * h, tq, seq_len], bias));
    let scores = tape.add(scores, bias)?;
    let attn = tape.softmax(scores, 2)?;
    let ctx = tape.batch_matmul(attn, v, false)?;
    let ctx = merge_heads(tape, ctx, n, tq, cfg)?;
    let attn_out = tape.linear(ctx, lv.wo(), lv.bo())?;
    let attn_out = dropout(tape, attn_out, cfg.dropout_rate, rng)?;
    let res1 = tape.add(xq, attn_out)?;
    let (g1, b1) = lv.ln1();
    let x1 = tape.layer_norm(res1, g1, b1, LAYER_NORM_EPS)?;

    let (w1, fb1) = lv.ffn1();
    let hidden = tape.linear(x1, w1, fb1)?;
    let hidden = tape.gelu(hidden)?;
    let (w2, fb2) = lv.ffn2();
    let ff = tape.linear(hidden, w2, fb2)?;
    let ff = dropout(tape, ff, cfg.dropout_rate, rng)?;
    let res2 = tape.add(x1, ff)?;
    let (g2, b2) = lv.ln2();
    tape.layer_norm(res2, g2, b2, LAYER_NORM_EPS)
}

/// Final-layer `[CLS]` vectors, `[n×d]`, from an embedded batch `[n×T×d]`.
pub fn cls_features(tape: &mut Tape, vars: &ParamVars, emb: Var, mask: &[bool], mut rng: Dropout) -> Result<Var> {
    let cfg = &vars.config;
    let shape = tape.shape(emb).to_vec();
    if shape.len() != 3 || shape[2] != cfg.hidden_dim || shape[1] > cfg.max_seq_len {
        return Err(Error::ShapeMismatch {
            op: "forward_from_embeddings",
            left: shape,
            right: vec![cfg.max_seq_len, cfg.hidden_dim],
        });
    }
    let (n, seq_len) = (shape[0], shape[1]);
    check_mask(mask, n, seq_len)?;
    let mut x = emb;
    let depth = vars.num_layers();
    for l in 0..depth {
        x = encoder_layer(tape, vars.layer(l), cfg, x, mask, n, seq_len, l + 1 == depth, &mut rng)?;
    }
    if depth == 0 {
        x = tape.narrow(x, 1, 0, 1)?;
    }
    tape.reshape(x, &[n, cfg.hidden_dim])
}

/// Logits `[n×C]` from an embedded batch. Padded keys are masked out of every
/// attention, and the classifier reads the final `[CLS]` vector.
pub fn forward_from_embeddings(tape: &mut Tape, vars: &ParamVars, emb: Var, mask: &[bool], rng: Dropout) -> Result<Var> {
    let cls = cls_features(tape, vars, emb, mask, rng)?;
    let (w, b) = vars.classifier();
    tape.linear(cls, w, b)
}

/// `embed` followed by `forward_from_embeddings`.
pub fn forward_tokens(tape: &mut Tape, vars: &ParamVars, batch: &Batch, rng: Dropout) -> Result<Var> {
    let emb = embed(tape, vars, &batch.ids, &batch.mask, batch.n)?;
    forward_from_embeddings(tape, vars, emb, &batch.mask, rng)
}

impl ModelParams {
    /// Eval-mode logits, without gradient tracking.
    pub fn logits(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, self, false);
        let out = forward_tokens(&mut tape, &vars, batch, None)?;
        Ok(tape.value(out).clone())
    }

    /// Eval-mode final-layer `[CLS]` vectors.
    pub fn cls_features(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, self, false);
        let emb = embed(&mut tape, &vars, &batch.ids, &batch.mask, batch.n)?;
        let out = cls_features(&mut tape, &vars, emb, &batch.mask, None)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Encoded, Example, Vocab, CLS, PAD};
    use crate::tensor::finite_diff_check;
    use rand::SeedableRng;

    fn config(layers: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            vocab_size: 12,
            max_seq_len: 6,
            num_classes: 2,
            dropout_rate: 0.0,
        }
    }

    fn batch(rows: &[&[usize]], seq_len: usize) -> Batch {
        let n = rows.len();
        let mut ids = Vec::new();
        let mut mask = Vec::new();
        for r in rows {
            let mut row = vec![CLS];
            row.extend_from_slice(r);
            let real = row.len();
            row.resize(seq_len, PAD);
            mask.extend((0..seq_len).map(|i| i < real));
            ids.extend(row);
        }
        let mut labels = vec![0.0; n * 2];
        for r in 0..n {
            labels[r * 2 + r % 2] = 1.0;
        }
        Batch {
            ids,
            mask,
            labels: Tensor::from_parts(vec![n, 2], labels),
            indices: (0..n).collect(),
            n,
            seq_len,
        }
    }

    #[test]
    fn logits_shape() {
        let p = ModelParams::init_random(&config(2), 0).unwrap();
        let b = batch(&[&[4, 5], &[6, 7, 8, 9], &[10]], 6);
        let l = p.logits(&b).unwrap();
        assert_eq!(l.shape(), &[3, 2]);
    }

    #[test]
    fn all_pad_row_embeds_to_zero() {
        let p = ModelParams::init_random(&config(1), 0).unwrap();
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &p, false);
        let e = embed(&mut tape, &vars, &[5, 6, 7], &[false, false, false], 1).unwrap();
        assert!(tape.value(e).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_token_differs_by_position() {
        let p = ModelParams::init_random(&config(1), 0).unwrap();
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &p, false);
        let e = embed(&mut tape, &vars, &[CLS, 5, 5], &[true; 3], 1).unwrap();
        let v = tape.value(e).data();
        let d = 8;
        let pe = p.position_embedding.data();
        for c in 0..d {
            let diff = v[2 * d + c] - v[d + c];
            let want = pe[2 * d + c] - pe[d + c];
            assert!((diff - want).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let p = ModelParams::init_random(&config(1), 0).unwrap();
        let b = batch(&[&[99]], 4);
        assert!(matches!(p.logits(&b), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn pad_ids_do_not_matter() {
        let p = ModelParams::init_random(&config(2), 3).unwrap();
        let b = batch(&[&[4, 5], &[6]], 6);
        let mut b2 = b.clone();
        for (id, m) in b2.ids.iter_mut().zip(&b2.mask) {
            if !m {
                *id = 11;
            }
        }
        assert_eq!(p.logits(&b).unwrap(), p.logits(&b2).unwrap());
    }

    #[test]
    fn eval_is_deterministic_and_batch_independent() {
        let p = ModelParams::init_random(&config(2), 3).unwrap();
        let rows: Vec<Vec<usize>> = (0..8).map(|i| (0..(i % 4 + 1)).map(|j| 4 + (i + j) % 8).collect()).collect();
        let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
        let full = batch(&refs, 6);
        let all = p.logits(&full).unwrap();
        assert_eq!(all, p.logits(&full).unwrap());
        for r in 0..8 {
            let single = p.logits(&batch(&[refs[r]], 6)).unwrap();
            for c in 0..2 {
                assert!((single.data()[c] - all.row(r)[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_tokens_equals_embed_then_forward() {
        let p = ModelParams::init_random(&config(2), 1).unwrap();
        let b = batch(&[&[4, 5, 6], &[7]], 6);
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &p, false);
        let emb = embed(&mut tape, &vars, &b.ids, &b.mask, b.n).unwrap();
        let l = forward_from_embeddings(&mut tape, &vars, emb, &b.mask, None).unwrap();
        assert_eq!(tape.value(l), &p.logits(&b).unwrap());
    }

    #[test]
    fn equal_depth_student_matches_teacher() {
        let t = ModelParams::init_random(&config(2), 8).unwrap();
        let s = ModelParams::init_student_from_teacher(&t, &config(2)).unwrap();
        let b = batch(&[&[4, 5, 6], &[7]], 6);
        assert_eq!(t.logits(&b).unwrap(), s.logits(&b).unwrap());
    }

    #[test]
    fn unused_token_rows_get_zero_grad() {
        let p = ModelParams::init_random(&config(1), 2).unwrap();
        let b = batch(&[&[4, 5], &[6]], 4);
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &p, true);
        let logits = forward_tokens(&mut tape, &vars, &b, None).unwrap();
        let probs = tape.softmax(logits, 1).unwrap();
        let loss = tape.cross_entropy(probs, &b.labels).unwrap();
        tape.backward(loss).unwrap();
        let g = &vars.grads(&tape)[0];
        for id in [1usize, 3, 7, 8, 9, 10, 11] {
            assert!(g.row(id).iter().all(|&v| v == 0.0), "token {id}");
        }
        assert!(g.row(4).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn dropout_changes_train_output_reproducibly() {
        let mut c = config(1);
        c.dropout_rate = 0.3;
        let p = ModelParams::init_random(&c, 2).unwrap();
        let b = batch(&[&[4, 5], &[6]], 4);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &p, false);
            let out = forward_tokens(&mut tape, &vars, &b, Some(&mut rng)).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), p.logits(&b).unwrap());
    }

    #[test]
    fn encoded_batches_run_through_model() {
        let ex = vec![Example::new("a b c", 0), Example::new("c", 1)];
        let v = Vocab::build(&ex, 1, 12).unwrap();
        let enc = Encoded::new(&ex, &v, 6, 2).unwrap();
        let p = ModelParams::init_random(&config(1), 0).unwrap();
        assert_eq!(p.logits(&enc.batch(&[0, 1])).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn gradient_check_every_parameter_group() {
        let cfg = config(2);
        let p = ModelParams::init_random(&cfg, 4).unwrap();
        // larger weights so gradients are not dominated by the 0.02 init scale
        let mut p = p;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in p.arrays_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        let b = batch(&[&[4, 5, 6], &[7, 8]], 6);
        let arrays: Vec<Tensor> = p.arrays().into_iter().cloned().collect();
        for group in 0..arrays.len() {
            let report = finite_diff_check(
                |tape, x| {
                    let params = ModelParams::from_arrays(cfg.clone(), arrays.clone())?;
                    let mut vars = ParamVars::register(tape, &params, false);
                    vars.replace(group, x);
                    let logits = forward_tokens(tape, &vars, &b, None)?;
                    let probs = tape.softmax(logits, 1)?;
                    tape.cross_entropy(probs, &b.labels)
                },
                &arrays[group],
                1e-4,
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "group {group}: rel err {}", report.max_rel_err);
        }
    }
}
