//! Post-layer-norm transformer encoder classifier.
//!
//! The same architecture serves as the large teacher and the shallow student.
//! Classification reads the final hidden state at position 0, where the data
//! pipeline always places `[CLS]`.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use forward::{cls_features, embed, forward_from_embeddings, forward_tokens, Dropout, ParamVars};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard deviation of the normal used for weight matrices and embeddings.
pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Closed-form parameter count:
    /// `V·d + T·d + k·(4d² + 2·d·f + 9d + f) + d·C + C`.
    ///
    /// Per layer: four attention projections with bias (`4d² + 4d`), the
    /// feed-forward pair (`2·d·f + f + d`) and two layer norms (`4d`).
    pub fn param_count(&self) -> u64 {
        let (v, t, d, f, c, k) = (
            self.vocab_size as u64,
            self.max_seq_len as u64,
            self.hidden_dim as u64,
            self.ffn_dim as u64,
            self.num_classes as u64,
            self.num_layers as u64,
        );
        v * d + t * d + k * (4 * d * d + 2 * d * f + 9 * d + f) + d * c + c
    }

    /// Same shape with a different depth.
    pub fn with_layers(&self, num_layers: usize) -> Self {
        Self {
            num_layers,
            ..self.clone()
        }
    }
}

/// Learnable arrays of one encoder layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

pub(crate) const LAYER_ARRAYS: usize = 16;

const LAYER_ARRAY_NAMES: [&str; LAYER_ARRAYS] = [
    "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln1.gain", "ln1.bias",
    "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gain", "ln2.bias",
];

impl LayerParams {
    fn arrays(&self) -> [&Tensor; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }

    fn shapes(d: usize, f: usize) -> [Vec<usize>; 16] {
        [
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![d],
            vec![d],
            vec![d],
        ]
    }

    fn from_arrays(mut it: impl Iterator<Item = Tensor>) -> Self {
        let mut next = || it.next().expect("layer array count");
        Self {
            wq: next(),
            bq: next(),
            wk: next(),
            bk: next(),
            wv: next(),
            bv: next(),
            wo: next(),
            bo: next(),
            ln1_gain: next(),
            ln1_bias: next(),
            ffn_w1: next(),
            ffn_b1: next(),
            ffn_w2: next(),
            ffn_b2: next(),
            ln2_gain: next(),
            ln2_bias: next(),
        }
    }
}

/// All learnable arrays of a classifier, together with its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerParams>,
    pub classifier_w: Tensor,
    pub classifier_b: Tensor,
}

impl ModelParams {
    /// Seeded init: weights `N(0, 0.02²)`, biases zero, layer-norm gains one.
    pub fn init_random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let arrays = Self::array_specs(config)
            .into_iter()
            .map(|(name, shape)| {
                let numel = shape.iter().product();
                let data = if name.ends_with(".gain") {
                    vec![1.0; numel]
                } else if shape.len() == 2 {
                    (0..numel).map(|_| normal.sample(&mut rng)).collect()
                } else {
                    vec![0.0; numel]
                };
                Tensor::from_parts(shape, data)
            })
            .collect();
        Self::from_arrays(config.clone(), arrays)
    }

    /// Canonical `(name, shape)` listing, in the order used everywhere arrays are flattened.
    pub fn array_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (config.hidden_dim, config.ffn_dim);
        let mut specs = vec![
            ("embeddings.token".to_string(), vec![config.vocab_size, d]),
            ("embeddings.position".to_string(), vec![config.max_seq_len, d]),
        ];
        for l in 0..config.num_layers {
            for (name, shape) in LAYER_ARRAY_NAMES.iter().zip(LayerParams::shapes(d, f)) {
                specs.push((format!("layers.{l}.{name}"), shape));
            }
        }
        specs.push(("classifier.w".to_string(), vec![d, config.num_classes]));
        specs.push(("classifier.b".to_string(), vec![config.num_classes]));
        specs
    }

    /// Rebuilds params from arrays in canonical order, checking every shape.
    pub fn from_arrays(config: ModelConfig, arrays: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = Self::array_specs(&config);
        if specs.len() != arrays.len() {
            return Err(Error::Config(format!(
                "expected {} arrays, got {}",
                specs.len(),
                arrays.len()
            )));
        }
        for ((name, shape), t) in specs.iter().zip(&arrays) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "array {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = arrays.into_iter();
        let token_embedding = it.next().unwrap();
        let position_embedding = it.next().unwrap();
        let layers = (0..config.num_layers)
            .map(|_| LayerParams::from_arrays(it.by_ref().take(16)))
            .collect();
        let classifier_w = it.next().unwrap();
        let classifier_b = it.next().unwrap();
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            classifier_w,
            classifier_b,
        })
    }

    pub fn arrays(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.token_embedding, &self.position_embedding];
        for layer in &self.layers {
            out.extend(layer.arrays());
        }
        out.push(&self.classifier_w);
        out.push(&self.classifier_b);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in &mut self.layers {
            out.extend(layer.arrays_mut());
        }
        out.push(&mut self.classifier_w);
        out.push(&mut self.classifier_b);
        out
    }

    pub fn named_arrays(&self) -> Vec<(String, &Tensor)> {
        Self::array_specs(&self.config)
            .into_iter()
            .map(|(name, _)| name)
            .zip(self.arrays())
            .collect()
    }

    /// Sum of array sizes.
    pub fn param_count(&self) -> u64 {
        self.arrays().iter().map(|t| t.numel() as u64).sum()
    }

    /// FNV-1a over the bit patterns of every value, for immutability checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.arrays() {
            for v in t.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Student whose embeddings, first `k` layers and classifier head are
    /// copied from the teacher.
    pub fn init_student_from_teacher(teacher: &ModelParams, student: &ModelConfig) -> Result<Self> {
        student.validate()?;
        let t = &teacher.config;
        if student.num_layers > t.num_layers {
            return Err(Error::Config(format!(
                "student depth {} exceeds teacher depth {}",
                student.num_layers, t.num_layers
            )));
        }
        let same = t.hidden_dim == student.hidden_dim
            && t.num_heads == student.num_heads
            && t.ffn_dim == student.ffn_dim
            && t.vocab_size == student.vocab_size
            && t.max_seq_len == student.max_seq_len
            && t.num_classes == student.num_classes;
        if !same {
            return Err(Error::Config(
                "student and teacher must share hidden, head, ffn, vocab, length and class dims".into(),
            ));
        }
        Ok(Self {
            config: student.clone(),
            token_embedding: teacher.token_embedding.clone(),
            position_embedding: teacher.position_embedding.clone(),
            layers: teacher.layers[..student.num_layers].to_vec(),
            classifier_w: teacher.classifier_w.clone(),
            classifier_b: teacher.classifier_b.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(layers: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            vocab_size: 20,
            max_seq_len: 6,
            num_classes: 2,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config(1);
        assert!(c.validate().is_ok());
        c.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1);
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = tiny_config(1);
        c.vocab_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn param_count_formula_matches_arrays() {
        for layers in 1..4 {
            let c = tiny_config(layers);
            let p = ModelParams::init_random(&c, 0).unwrap();
            assert_eq!(p.param_count(), c.param_count());
        }
    }

    #[test]
    fn bert_base_sized_count() {
        let c = ModelConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ffn_dim: 3072,
            vocab_size: 30522,
            max_seq_len: 512,
            num_classes: 2,
            dropout_rate: 0.0,
        };
        assert_eq!(c.param_count(), 108_890_114);
    }

    #[test]
    fn init_is_deterministic() {
        let c = tiny_config(2);
        let a = ModelParams::init_random(&c, 9).unwrap();
        let b = ModelParams::init_random(&c, 9).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
        let other = ModelParams::init_random(&c, 10).unwrap();
        assert_ne!(a.checksum(), other.checksum());
    }

    #[test]
    fn init_gains_and_biases() {
        let p = ModelParams::init_random(&tiny_config(2), 1).unwrap();
        for (name, t) in p.named_arrays() {
            if name.ends_with(".gain") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if t.rank() == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn init_embedding_std() {
        let mut c = tiny_config(1);
        c.vocab_size = 400;
        c.hidden_dim = 32;
        c.num_heads = 4;
        let p = ModelParams::init_random(&c, 5).unwrap();
        let d = p.token_embedding.data();
        assert!(d.len() >= 10_000);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        let std = var.sqrt();
        assert!((0.015..=0.025).contains(&std), "std {std}");
    }

    #[test]
    fn student_copies_teacher_prefix() {
        let teacher = ModelParams::init_random(&tiny_config(3), 2).unwrap();
        let full = ModelParams::init_student_from_teacher(&teacher, &tiny_config(3)).unwrap();
        assert_eq!(full, teacher);
        let s = ModelParams::init_student_from_teacher(&teacher, &tiny_config(2)).unwrap();
        assert_eq!(s.layers[1], teacher.layers[1]);
        assert_eq!(s.token_embedding, teacher.token_embedding);
        assert_eq!(s.classifier_w, teacher.classifier_w);

        assert!(ModelParams::init_student_from_teacher(&teacher, &tiny_config(4)).is_err());
        let mut wide = tiny_config(1);
        wide.hidden_dim = 16;
        assert!(ModelParams::init_student_from_teacher(&teacher, &wide).is_err());
    }

    #[test]
    fn from_arrays_checks_shapes() {
        let p = ModelParams::init_random(&tiny_config(1), 0).unwrap();
        let mut arrays: Vec<Tensor> = p.arrays().into_iter().cloned().collect();
        arrays[3] = Tensor::zeros(&[3]);
        assert!(ModelParams::from_arrays(p.config.clone(), arrays).is_err());
    }
}
