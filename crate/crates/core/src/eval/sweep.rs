use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::distill::{distill_student, Splits, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub alpha_sm_values: Vec<f64>,
    pub alpha_tmkd_values: Vec<f64>,
    pub mixup_ratio_values: Vec<usize>,
    pub base: TrainConfig,
}

impl SweepGrid {
    pub fn cells(&self) -> usize {
        self.alpha_sm_values.len() * self.alpha_tmkd_values.len() * self.mixup_ratio_values.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha_sm: f64,
    pub alpha_tmkd: f64,
    pub mixup_ratio: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// Max minus min dev accuracy over successful cells.
    pub fn accuracy_spread(&self) -> Option<f64> {
        let acc: Vec<f64> = self.cells.iter().filter_map(|c| c.metrics.as_ref()).map(|m| m.accuracy).collect();
        let max = acc.iter().cloned().reduce(f64::max)?;
        let min = acc.iter().cloned().reduce(f64::min)?;
        Some(max - min)
    }

    /// Aligned-column text table.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("alpha_sm\talpha_tmkd\tmixup_ratio\taccuracy\tf1\terror\n");
        for c in &self.cells {
            let acc = c.metrics.as_ref().map_or("-".to_string(), |m| format!("{:.4}", m.accuracy));
            let f1 = c.metrics.as_ref().and_then(|m| m.f1).map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<8}\t{:<10}\t{:<11}\t{acc:<8}\t{f1:<6}\t{}",
                c.alpha_sm,
                c.alpha_tmkd,
                c.mixup_ratio,
                c.error.as_deref().unwrap_or("")
            );
        }
        s
    }

    /// Writes `sweep.tsv` and `sweep.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.tsv"), self.to_tsv())?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One SM+TMKD run per grid cell, all sharing the teacher, seed and data
/// order. A failing cell is recorded and the sweep moves on.
pub fn sweep_grid(grid: &SweepGrid, splits: &Splits, teacher: &ModelParams, student: &ModelConfig) -> Result<SweepTable> {
    if grid.cells() == 0 {
        return Err(Error::Config("sweep grid has an empty value list".into()));
    }
    let mut cells = Vec::with_capacity(grid.cells());
    for &mixup_ratio in &grid.mixup_ratio_values {
        for &alpha_sm in &grid.alpha_sm_values {
            for &alpha_tmkd in &grid.alpha_tmkd_values {
                let mut cfg = grid.base.clone();
                cfg.loss.alpha_sm = alpha_sm;
                cfg.loss.alpha_tmkd = alpha_tmkd;
                cfg.mixup.mixup_ratio = mixup_ratio;
                let (metrics, error) = match distill_student(&cfg, splits, teacher, student, Variant::SmTmkd) {
                    Ok((_, rec)) => (rec.final_metrics, None),
                    Err(e) => (None, Some(e.to_string())),
                };
                cells.push(SweepCell {
                    alpha_sm,
                    alpha_tmkd,
                    mixup_ratio,
                    metrics,
                    error,
                });
            }
        }
    }
    Ok(SweepTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::SyntheticTask;
    use crate::data::{Encoded, Vocab};
    use crate::distill::train_teacher;

    #[test]
    fn zero_weight_cell_matches_ft_and_bad_cells_are_recorded() {
        let (train, dev) = SyntheticTask::default().splits(32, 16, 2);
        let vocab = Vocab::build(&train.examples, 1, 1000).unwrap();
        let splits = Splits {
            train: Encoded::new(&train.examples, &vocab, 16, 2).unwrap(),
            dev: Some(Encoded::new(&dev.examples, &vocab, 16, 2).unwrap()),
        };
        let cfg = ModelConfig {
            num_layers: 2,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            vocab_size: vocab.len(),
            max_seq_len: 16,
            num_classes: 2,
            dropout_rate: 0.1,
        };
        let base = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..Default::default()
        };
        let (teacher, _) = train_teacher(&cfg, &base, &splits).unwrap();
        let student = cfg.with_layers(1);
        let grid = SweepGrid {
            alpha_sm_values: vec![0.0, 1.0],
            alpha_tmkd_values: vec![0.0, -1.0],
            mixup_ratio_values: vec![0],
            base: base.clone(),
        };
        let table = sweep_grid(&grid, &splits, &teacher, &student).unwrap();
        assert_eq!(table.cells.len(), 4);
        let (_, ft) = distill_student(&base, &splits, &teacher, &student, Variant::Ft).unwrap();
        assert_eq!(table.cells[0].metrics, ft.final_metrics);
        assert!(table.cells[1].error.is_some());
        assert_eq!(table.to_tsv().lines().count(), 5);
    }
}
