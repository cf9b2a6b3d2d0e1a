//! Distillation objective, optimizers and training loops.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixup::MixupConfig;
use crate::tensor::{Tape, Var};

mod optim;
mod record;
mod train;

pub use optim::Optimizer;
pub use record::{EvalLog, RunRecord, StepLog, Summary};
pub use train::{distill_student, run_seeds, train_model, train_teacher, SeedReport, Splits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Mse,
    TemperatureCe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_sm: f64,
    pub alpha_tmkd: f64,
    pub distance: DistanceMetric,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_sm: 1.0,
            alpha_tmkd: 1.0,
            distance: DistanceMetric::Mse,
            temperature: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sm >= 0.0 && self.alpha_tmkd >= 0.0) || !self.alpha_sm.is_finite() || !self.alpha_tmkd.is_finite() {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Which embedding table turns a mixup spec into vectors for the student.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Teacher and student each mix in their own embedding space.
    #[default]
    PerModel,
    /// The student consumes the teacher's mixed embeddings as fixed inputs.
    SharedTeacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mixup: MixupConfig,
    pub loss: LossWeights,
    /// Dev evaluation period in steps; 0 evaluates at the end of every epoch.
    pub eval_every: usize,
    /// Stops after this many optimizer steps when set.
    pub max_steps: Option<usize>,
    pub embedding_source: EmbeddingSource,
    /// Drops mixup pairs with a backtranslated endpoint.
    pub exclude_augmented_from_mixup: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
            mixup: MixupConfig::default(),
            loss: LossWeights::default(),
            eval_every: 0,
            max_steps: None,
            embedding_source: EmbeddingSource::PerModel,
            exclude_augmented_from_mixup: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        self.mixup.validate()?;
        self.loss.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ft")]
    Ft,
    #[serde(rename = "tmkd")]
    Tmkd,
    #[serde(rename = "sm-tmkd")]
    SmTmkd,
}

impl Variant {
    /// Effective `(α_SM, α_TMKD)` after gating by the variant.
    pub fn weights(self, w: &LossWeights) -> (f64, f64) {
        match self {
            Variant::Ft => (0.0, 0.0),
            Variant::Tmkd => (0.0, w.alpha_tmkd),
            Variant::SmTmkd => (w.alpha_sm, w.alpha_tmkd),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ft => "ft",
            Variant::Tmkd => "tmkd",
            Variant::SmTmkd => "sm-tmkd",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '+'], "-").as_str() {
            "ft" => Ok(Variant::Ft),
            "tmkd" => Ok(Variant::Tmkd),
            "sm-tmkd" => Ok(Variant::SmTmkd),
            other => Err(Error::Config(format!("unknown variant {other:?}, expected ft, tmkd or sm-tmkd"))),
        }
    }
}

/// Cross-entropy of softmax(logits) against one-hot labels.
pub fn loss_mle(tape: &mut Tape, logits: Var, labels: &crate::tensor::Tensor) -> Result<Var> {
    let p = tape.softmax(logits, 1)?;
    tape.cross_entropy(p, labels)
}

/// Soft-target cross-entropy of the student's predictions on mixed inputs.
pub fn loss_sm(tape: &mut Tape, student_logits: Var, mixed_labels: &crate::tensor::Tensor) -> Result<Var> {
    let p = tape.softmax(student_logits, 1)?;
    tape.cross_entropy(p, mixed_labels)
}

/// Distance between teacher and student outputs. The teacher side is
/// detached, so no gradient reaches the teacher.
pub fn loss_tmkd(tape: &mut Tape, teacher_logits: Var, student_logits: Var, weights: &LossWeights) -> Result<Var> {
    let t = tape.detach(teacher_logits);
    match weights.distance {
        DistanceMetric::Mse => tape.mse(student_logits, t),
        DistanceMetric::TemperatureCe => {
            let tau = weights.temperature;
            let ts = tape.scale(t, 1.0 / tau)?;
            let target = tape.softmax(ts, 1)?;
            let target = tape.value(target).clone();
            let ss = tape.scale(student_logits, 1.0 / tau)?;
            let p = tape.softmax(ss, 1)?;
            let ce = tape.cross_entropy(p, &target)?;
            tape.scale(ce, tau * tau)
        }
    }
}

/// Values of the three loss terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub mle: f64,
    pub sm: f64,
    pub tmkd: f64,
    pub alpha_sm: f64,
    pub alpha_tmkd: f64,
}

impl LossComponents {
    /// `|total − (mle + α_SM·sm + α_TMKD·tmkd)|`
    pub fn recombination_error(&self) -> f64 {
        (self.total - (self.mle + self.alpha_sm * self.sm + self.alpha_tmkd * self.tmkd)).abs()
    }
}

/// `L_MLE + α_SM·L_SM + α_TMKD·L_TMKD` on a tape. Absent or zero-weighted
/// terms are left out of the graph and logged as 0.
pub fn total_loss(
    tape: &mut Tape,
    mle: Var,
    sm: Option<Var>,
    tmkd: Option<Var>,
    alpha_sm: f64,
    alpha_tmkd: f64,
) -> Result<(Var, LossComponents)> {
    let mut comps = LossComponents {
        mle: tape.value(mle).item(),
        alpha_sm,
        alpha_tmkd,
        ..Default::default()
    };
    let mut total = mle;
    if let Some(sm) = sm.filter(|_| alpha_sm != 0.0) {
        comps.sm = tape.value(sm).item();
        let w = tape.scale(sm, alpha_sm)?;
        total = tape.add(total, w)?;
    }
    if let Some(tm) = tmkd.filter(|_| alpha_tmkd != 0.0) {
        comps.tmkd = tape.value(tm).item();
        let w = tape.scale(tm, alpha_tmkd)?;
        total = tape.add(total, w)?;
    }
    comps.total = tape.value(total).item();
    Ok((total, comps))
}
