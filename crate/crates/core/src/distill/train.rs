use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    loss_mle, loss_sm, loss_tmkd, total_loss, EmbeddingSource, EvalLog, Optimizer, RunRecord, StepLog, Summary,
    TrainConfig, Variant,
};
use crate::data::{Batch, Encoded};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::mixup::{make_pairs, materialize, spec_sources, MixupSpec, PairingMode};
use crate::model::{forward_from_embeddings, forward_tokens, ModelConfig, ModelParams, ParamVars};
use crate::tensor::{Tape, Tensor};

/// Training examples plus an optional dev split for checkpoint selection.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Encoded,
    pub dev: Option<Encoded>,
}

const EVAL_BATCH: usize = 64;

/// Derives an independent stream seed (splitmix64 finalizer).
fn stream(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn positive_class(num_classes: usize) -> Option<usize> {
    (num_classes == 2).then_some(1)
}

fn diverged(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            what: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

struct Mixing<'a> {
    teacher: Option<&'a ModelParams>,
    alpha_sm: f64,
    alpha_tmkd: f64,
}

/// Specs for one batch, minus pairs touching augmented examples when asked.
fn batch_specs(
    config: &TrainConfig,
    data: &Encoded,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<MixupSpec>, Vec<usize>)> {
    let pool: Vec<usize> = match config.mixup.pairing {
        PairingMode::InBatchShuffle => Vec::new(),
        PairingMode::IndependentExtra => {
            let mut in_batch = vec![false; data.len()];
            for &i in &batch.indices {
                in_batch[i] = true;
            }
            (0..data.len()).filter(|&i| !in_batch[i]).collect()
        }
    };
    let mut specs = make_pairs(batch.n, &config.mixup, rng, pool.len())?;
    if config.exclude_augmented_from_mixup {
        let (left, right) = spec_sources(batch, &specs, &pool)?;
        let keep: Vec<bool> = left
            .iter()
            .zip(&right)
            .map(|(&i, &j)| !data.augmented[i] && !data.augmented[j])
            .collect();
        let mut k = keep.iter();
        specs.retain(|_| *k.next().unwrap());
    }
    Ok((specs, pool))
}

/// The shared optimization loop. `teacher` is only consulted when the
/// variant's TMKD weight is nonzero and mixup samples exist.
pub fn train_model(
    init: ModelParams,
    config: &TrainConfig,
    splits: &Splits,
    teacher: Option<&ModelParams>,
    variant: Variant,
) -> Result<(ModelParams, RunRecord)> {
    config.validate()?;
    let data = &splits.train;
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if data.num_classes != init.config.num_classes {
        return Err(Error::Config(format!(
            "data has {} classes, model has {}",
            data.num_classes, init.config.num_classes
        )));
    }
    let (alpha_sm, alpha_tmkd) = variant.weights(&config.loss);
    let uses_mixup = (alpha_sm > 0.0 || alpha_tmkd > 0.0) && config.mixup.mixup_ratio > 0;
    if uses_mixup && alpha_tmkd > 0.0 && teacher.is_none() {
        return Err(Error::Config(format!("variant {variant} needs a teacher")));
    }
    let mixing = Mixing {
        teacher,
        alpha_sm,
        alpha_tmkd,
    };

    let started = Instant::now();
    let mut record = RunRecord::new(config.seed, Some(variant));
    let mut params = init;
    let mut best: Option<(f64, ModelParams)> = None;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(stream(config.seed, 2, 0));
    let mut step = 0usize;
    let pos = positive_class(data.num_classes);

    let eval_now = |params: &ModelParams, step: usize, record: &mut RunRecord, best: &mut Option<(f64, ModelParams)>| -> Result<()> {
        if let Some(dev) = &splits.dev {
            let m = evaluate(params, dev, EVAL_BATCH, pos)?;
            if best.as_ref().is_none_or(|(acc, _)| m.accuracy > *acc) {
                *best = Some((m.accuracy, params.clone()));
                record.best_step = step;
                record.final_metrics = Some(m.clone());
            }
            record.evals.push(EvalLog { step, dev: m });
        }
        Ok(())
    };

    'outer: for epoch in 0..config.epochs {
        let mut mix_rng = ChaCha8Rng::seed_from_u64(stream(config.seed, 3, epoch as u64));
        let batches = data.batches(config.batch_size, Some(stream(config.seed, 1, epoch as u64)));
        for batch in &batches {
            if config.max_steps.is_some_and(|m| step >= m) {
                break 'outer;
            }
            step += 1;
            let (specs, pool) = if uses_mixup {
                batch_specs(config, data, batch, &mut mix_rng)?
            } else {
                (Vec::new(), Vec::new())
            };
            let (grads, log, calls) = train_step(&params, batch, data, &specs, &pool, &mixing, config, &mut dropout_rng)
                .map_err(diverged(step))?;
            record.teacher_forward_calls += calls;
            if !log.total.is_finite() {
                return Err(Error::Diverged {
                    step,
                    what: "loss is not finite".into(),
                });
            }
            opt.step(&mut params, &grads).map_err(diverged(step))?;
            record.steps.push(StepLog {
                step,
                epoch,
                loss: log,
                mixup_samples: specs.len(),
            });
            if config.eval_every > 0 && step % config.eval_every == 0 {
                eval_now(&params, step, &mut record, &mut best)?;
            }
        }
        if config.eval_every == 0 {
            eval_now(&params, step, &mut record, &mut best)?;
        }
    }
    if record.evals.last().is_none_or(|e| e.step != step) {
        eval_now(&params, step, &mut record, &mut best)?;
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    let out = best.map(|(_, p)| p).unwrap_or(params);
    Ok((out, record))
}

type StepOut = (Vec<Tensor>, super::LossComponents, usize);

#[allow(clippy::too_many_arguments)]
fn train_step(
    params: &ModelParams,
    batch: &Batch,
    data: &Encoded,
    specs: &[MixupSpec],
    pool: &[usize],
    mixing: &Mixing,
    config: &TrainConfig,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<StepOut> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true);
    let logits = forward_tokens(&mut tape, &vars, batch, Some(dropout_rng))?;
    let mle = loss_mle(&mut tape, logits, &batch.labels)?;
    let (mut sm, mut tmkd, mut calls) = (None, None, 0);

    if !specs.is_empty() {
        let need_teacher = mixing.alpha_tmkd > 0.0 || config.embedding_source == EmbeddingSource::SharedTeacher;
        let mut teacher_view = None;
        if let (true, Some(teacher)) = (need_teacher, mixing.teacher) {
            let mut tt = Tape::new();
            let tv = ParamVars::register(&mut tt, teacher, false);
            let mixed = materialize(&mut tt, &tv, data, batch, specs, pool)?;
            let emb = tt.value(mixed.emb).clone();
            let out = if mixing.alpha_tmkd > 0.0 {
                calls += 1;
                let l = forward_from_embeddings(&mut tt, &tv, mixed.emb, &mixed.mask, None)?;
                Some(tt.value(l).clone())
            } else {
                None
            };
            teacher_view = Some((emb, out));
        }
        let mixed = materialize(&mut tape, &vars, data, batch, specs, pool)?;
        let emb = match (&teacher_view, config.embedding_source) {
            (Some((shared, _)), EmbeddingSource::SharedTeacher) => tape.constant(shared.clone()),
            (None, EmbeddingSource::SharedTeacher) => {
                return Err(Error::Config("shared_teacher embeddings need a teacher".into()));
            }
            _ => mixed.emb,
        };
        let s_mixed = forward_from_embeddings(&mut tape, &vars, emb, &mixed.mask, Some(dropout_rng))?;
        if mixing.alpha_sm > 0.0 {
            sm = Some(loss_sm(&mut tape, s_mixed, &mixed.labels)?);
        }
        if let Some((_, Some(t_logits))) = teacher_view {
            let t = tape.constant(t_logits);
            tmkd = Some(loss_tmkd(&mut tape, t, s_mixed, &config.loss)?);
        }
    }
    let (total, comps) = total_loss(&mut tape, mle, sm, tmkd, mixing.alpha_sm, mixing.alpha_tmkd)?;
    tape.backward(total)?;
    Ok((vars.grads(&tape), comps, calls))
}

/// Fine-tunes a freshly initialized model on `L_MLE` only.
pub fn train_teacher(model: &ModelConfig, config: &TrainConfig, splits: &Splits) -> Result<(ModelParams, RunRecord)> {
    let init = ModelParams::init_random(model, stream(config.seed, 4, 0))?;
    let (params, mut record) = train_model(init, config, splits, None, Variant::Ft)?;
    record.variant = None;
    Ok((params, record))
}

/// Student initialized from the teacher's first layers, trained with the
/// variant's loss subset. The teacher is only read.
pub fn distill_student(
    config: &TrainConfig,
    splits: &Splits,
    teacher: &ModelParams,
    student: &ModelConfig,
    variant: Variant,
) -> Result<(ModelParams, RunRecord)> {
    let init = ModelParams::init_student_from_teacher(teacher, student)?;
    let teacher = (variant != Variant::Ft).then_some(teacher);
    train_model(init, config, splits, teacher, variant)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub accuracy: Summary,
    pub f1: Option<Summary>,
    pub runs: Vec<RunRecord>,
}

impl SeedReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.final_accuracy()).collect()
    }
}

/// Independent distillation runs, one per seed.
pub fn run_seeds(
    config: &TrainConfig,
    splits: &Splits,
    teacher: &ModelParams,
    student: &ModelConfig,
    variant: Variant,
    seeds: &[u64],
) -> Result<SeedReport> {
    if seeds.len() < 2 {
        return Err(Error::Config("run_seeds needs at least two seeds".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig { seed, ..config.clone() };
        let (_, record) = distill_student(&cfg, splits, teacher, student, variant).map_err(|e| Error::Seed {
            seed,
            source: Box::new(e),
        })?;
        runs.push(record);
    }
    let finals: Vec<Metrics> = runs.iter().filter_map(|r| r.final_metrics.clone()).collect();
    if finals.len() != runs.len() {
        return Err(Error::Config("run_seeds needs a dev split".into()));
    }
    let acc: Vec<f64> = finals.iter().map(|m| m.accuracy).collect();
    let f1: Option<Vec<f64>> = finals.iter().map(|m| m.f1).collect();
    Ok(SeedReport {
        variant,
        seeds: seeds.to_vec(),
        accuracy: Summary::of(&acc),
        f1: f1.map(|v| Summary::of(&v)),
        runs,
    })
}
