//! Embedding-level mixup.
//!
//! A [`MixupSpec`] is only a recipe `(i, j, λ)`. Each model materializes it in
//! its own embedding table: both sequences are embedded (padding is the exact
//! zero vector), interpolated position by position with a single λ, and the
//! one-hot labels are interpolated with the same λ.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Encoded};
use crate::error::{Error, Result};
use crate::model::{embed, ParamVars};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Partner `j = σ(i)` for a seeded permutation σ of the minibatch.
    InBatchShuffle,
    /// Partner drawn from a pool of extra training examples outside the batch,
    /// so pairs are independent across `i`.
    IndependentExtra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    pub beta_alpha: f64,
    /// Mixup samples generated per original sample in a minibatch.
    pub mixup_ratio: usize,
    pub pairing: PairingMode,
    pub seed: u64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            beta_alpha: 0.4,
            mixup_ratio: 1,
            pairing: PairingMode::InBatchShuffle,
            seed: 0,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_alpha > 0.0 && self.beta_alpha.is_finite()) {
            return Err(Error::Config(format!("beta_alpha must be positive, got {}", self.beta_alpha)));
        }
        Ok(())
    }
}

/// Mixing recipe for one augmented sample. The sample is indexed by its
/// primary parent `index_i` whatever the value of λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupSpec {
    pub index_i: usize,
    pub index_j: usize,
    /// True when `index_j` refers to the extra pool rather than the batch.
    pub j_in_pool: bool,
    pub lambda: f64,
}

/// `λ ~ Beta(α, α)` as `X / (X + Y)` with `X, Y ~ Gamma(α, 1)`.
pub fn sample_lambda(config: &MixupConfig, rng: &mut impl Rng) -> f64 {
    let gamma = Gamma::new(config.beta_alpha, 1.0).expect("validated beta_alpha");
    loop {
        let x = gamma.sample(rng);
        let y = gamma.sample(rng);
        if x + y > 0.0 {
            return (x / (x + y)).clamp(0.0, 1.0);
        }
    }
}

/// `mixup_ratio · n` specs, each batch position appearing as `index_i`
/// exactly `mixup_ratio` times, with a fresh λ per spec.
pub fn make_pairs(n: usize, config: &MixupConfig, rng: &mut impl Rng, extra_pool_size: usize) -> Result<Vec<MixupSpec>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Config("cannot pair an empty batch".into()));
    }
    let total = config.mixup_ratio * n;
    if total == 0 {
        return Ok(Vec::new());
    }
    let partners: Vec<usize> = match config.pairing {
        PairingMode::InBatchShuffle => {
            let mut out = Vec::with_capacity(total);
            for _ in 0..config.mixup_ratio {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                out.extend(perm);
            }
            out
        }
        PairingMode::IndependentExtra => {
            if extra_pool_size == 0 {
                return Err(Error::Config("independent_extra pairing needs a nonempty extra pool".into()));
            }
            if extra_pool_size >= total {
                index::sample(rng, extra_pool_size, total).into_vec()
            } else if extra_pool_size >= n {
                (0..config.mixup_ratio)
                    .flat_map(|_| index::sample(rng, extra_pool_size, n).into_vec())
                    .collect()
            } else {
                (0..total).map(|_| rng.random_range(0..extra_pool_size)).collect()
            }
        }
    };
    let j_in_pool = config.pairing == PairingMode::IndependentExtra;
    Ok(partners
        .into_iter()
        .enumerate()
        .map(|(k, j)| MixupSpec {
            index_i: k % n,
            index_j: j,
            j_in_pool,
            lambda: sample_lambda(config, rng),
        })
        .collect())
}

/// Interpolated embeddings, attention mask and soft labels for a set of pairs.
#[derive(Clone, Debug)]
pub struct MixedBatch {
    /// `[n×T×d]`
    pub emb: Var,
    /// Union of the two source masks.
    pub mask: Vec<bool>,
    /// `[n×C]`, rows on the simplex.
    pub labels: Tensor,
    pub lambdas: Vec<f64>,
    pub n: usize,
}

/// `λ·x_i + (1−λ)·x_j` at every position (one λ per row), the same
/// interpolation of the labels, and the union of the masks.
#[allow(clippy::too_many_arguments)]
pub fn mix_batch(
    tape: &mut Tape,
    emb_i: Var,
    emb_j: Var,
    mask_i: &[bool],
    mask_j: &[bool],
    labels_i: &Tensor,
    labels_j: &Tensor,
    lambdas: &[f64],
) -> Result<MixedBatch> {
    let shape = tape.shape(emb_i).to_vec();
    if shape != tape.shape(emb_j) {
        return Err(Error::ShapeMismatch {
            op: "mix_batch",
            left: shape,
            right: tape.shape(emb_j).to_vec(),
        });
    }
    if shape.len() != 3 {
        return Err(Error::Config(format!("mix_batch expects [n×T×d] embeddings, got {shape:?}")));
    }
    let (n, seq_len, d) = (shape[0], shape[1], shape[2]);
    if labels_i.shape() != labels_j.shape() || labels_i.shape().first() != Some(&n) {
        return Err(Error::ShapeMismatch {
            op: "mix_batch labels",
            left: labels_i.shape().to_vec(),
            right: labels_j.shape().to_vec(),
        });
    }
    if lambdas.len() != n || mask_i.len() != n * seq_len || mask_j.len() != n * seq_len {
        return Err(Error::Config("mix_batch: lambdas or masks disagree with batch size".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
    }
    let per_row = seq_len * d;
    let tile = |f: &dyn Fn(f64) -> f64| -> Tensor {
        let data = lambdas
            .iter()
            .flat_map(|&l| std::iter::repeat_n(f(l), per_row))
            .collect();
        Tensor::from_parts(shape.clone(), data)
    };
    let wi = tape.constant(tile(&|l| l));
    let wj = tape.constant(tile(&|l| 1.0 - l));
    let a = tape.mul(emb_i, wi)?;
    let b = tape.mul(emb_j, wj)?;
    let emb = tape.add(a, b)?;

    let c = labels_i.shape()[1];
    let labels = (0..n)
        .flat_map(|r| {
            let l = lambdas[r];
            (0..c).map(move |k| l * labels_i.row(r)[k] + (1.0 - l) * labels_j.row(r)[k])
        })
        .collect();
    Ok(MixedBatch {
        emb,
        mask: mask_i.iter().zip(mask_j).map(|(a, b)| *a || *b).collect(),
        labels: Tensor::from_parts(vec![n, c], labels),
        lambdas: lambdas.to_vec(),
        n,
    })
}

/// Source rows for the two sides of each spec.
pub fn spec_sources(batch: &Batch, specs: &[MixupSpec], pool: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut left = Vec::with_capacity(specs.len());
    let mut right = Vec::with_capacity(specs.len());
    for s in specs {
        let i = *batch
            .indices
            .get(s.index_i)
            .ok_or_else(|| Error::Config(format!("spec index_i {} outside batch", s.index_i)))?;
        let j = if s.j_in_pool {
            *pool
                .get(s.index_j)
                .ok_or_else(|| Error::Config(format!("spec index_j {} outside pool", s.index_j)))?
        } else {
            *batch
                .indices
                .get(s.index_j)
                .ok_or_else(|| Error::Config(format!("spec index_j {} outside batch", s.index_j)))?
        };
        left.push(i);
        right.push(j);
    }
    Ok((left, right))
}

/// Embeds both parents of every spec with `vars` and mixes them.
/// `pool` maps pool positions to dataset rows for `j_in_pool` specs.
pub fn materialize(
    tape: &mut Tape,
    vars: &ParamVars,
    data: &Encoded,
    batch: &Batch,
    specs: &[MixupSpec],
    pool: &[usize],
) -> Result<MixedBatch> {
    let (left, right) = spec_sources(batch, specs, pool)?;
    let bi = data.batch(&left);
    let bj = data.batch(&right);
    let ei = embed(tape, vars, &bi.ids, &bi.mask, bi.n)?;
    let ej = embed(tape, vars, &bj.ids, &bj.mask, bj.n)?;
    let lambdas: Vec<f64> = specs.iter().map(|s| s.lambda).collect();
    mix_batch(tape, ei, ej, &bi.mask, &bj.mask, &bi.labels, &bj.labels, &lambdas)
}
