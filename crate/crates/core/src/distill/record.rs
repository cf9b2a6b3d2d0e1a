use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LossComponents, Variant};
use crate::error::Result;
use crate::eval::Metrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossComponents,
    pub mixup_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    pub step: usize,
    pub dev: Metrics,
}

/// Everything one training run logged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub variant: Option<Variant>,
    pub steps: Vec<StepLog>,
    pub evals: Vec<EvalLog>,
    /// Dev metrics of the selected checkpoint.
    pub final_metrics: Option<Metrics>,
    /// Step of the selected checkpoint (0 means the initial parameters).
    pub best_step: usize,
    pub teacher_forward_calls: usize,
    pub wall_clock_secs: f64,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Step(&'a StepLog),
    Eval(&'a EvalLog),
    Summary {
        seed: u64,
        variant: Option<Variant>,
        final_metrics: &'a Option<Metrics>,
        best_step: usize,
        teacher_forward_calls: usize,
        wall_clock_secs: f64,
    },
}

impl RunRecord {
    pub fn new(seed: u64, variant: Option<Variant>) -> Self {
        Self {
            seed,
            variant,
            steps: Vec::new(),
            evals: Vec::new(),
            final_metrics: None,
            best_step: 0,
            teacher_forward_calls: 0,
            wall_clock_secs: 0.0,
        }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.final_metrics.as_ref().map(|m| m.accuracy)
    }

    /// One JSON object per step and per evaluation, then a summary object.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for s in &self.steps {
            serde_json::to_writer(&mut out, &Line::Step(s))?;
            out.write_all(b"\n")?;
        }
        for e in &self.evals {
            serde_json::to_writer(&mut out, &Line::Eval(e))?;
            out.write_all(b"\n")?;
        }
        let summary = Line::Summary {
            seed: self.seed,
            variant: self.variant,
            final_metrics: &self.final_metrics,
            best_step: self.best_step,
            teacher_forward_calls: self.teacher_forward_calls,
            wall_clock_secs: self.wall_clock_secs,
        };
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Percentages with two decimals, `89.79±0.27`.
impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}
