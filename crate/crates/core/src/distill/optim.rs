use super::OptimizerKind;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

/// SGD or Adam with per-array moment buffers.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads` are in canonical parameter order.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        let mut arrays = params.arrays_mut();
        if arrays.len() != grads.len() {
            return Err(Error::Config(format!(
                "{} gradients for {} parameter arrays",
                grads.len(),
                arrays.len()
            )));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in arrays.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.numel()]).collect();
                    self.v = self.m.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, g)) in arrays.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * d;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
                        *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        for p in arrays {
            p.ensure_finite("optimizer step")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelParams {
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: 4,
            num_heads: 1,
            ffn_dim: 4,
            vocab_size: 6,
            max_seq_len: 3,
            num_classes: 2,
            dropout_rate: 0.0,
        };
        ModelParams::init_random(&cfg, 0).unwrap()
    }

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        let mut p = tiny();
        let before = p.clone();
        let grads: Vec<Tensor> = p.arrays().iter().map(|t| Tensor::full(t.shape(), 0.3)).collect();
        let mut opt = Optimizer::new(OptimizerKind::default(), 1e-3);
        opt.step(&mut p, &grads).unwrap();
        for (a, b) in p.arrays().iter().zip(before.arrays()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!(((y - x) - 1e-3).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sgd_is_plain_descent() {
        let mut p = tiny();
        let before = p.clone();
        let grads: Vec<Tensor> = p.arrays().iter().map(|t| Tensor::full(t.shape(), 2.0)).collect();
        Optimizer::new(OptimizerKind::Sgd, 0.5).step(&mut p, &grads).unwrap();
        assert_eq!(p.arrays()[0].data()[0], before.arrays()[0].data()[0] - 1.0);
    }
}
