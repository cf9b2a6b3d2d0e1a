use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Encoded;
use crate::error::{Error, Result};
use crate::mixup::{materialize, MixupSpec};
use crate::model::{cls_features, ModelParams, ParamVars};
use crate::tensor::Tape;

/// One exported point: an original (`λ = 1`, both parents equal) or a mixup
/// sample of two originals.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub id: usize,
    pub parent_i: usize,
    pub parent_j: usize,
    pub lambda: f64,
    pub soft_label: Vec<f64>,
    pub features: Vec<f64>,
}

const CHUNK: usize = 64;

/// `[CLS]` features for the examples at `indices` followed, after each
/// original, by the mixup samples that have it as primary parent. Spec
/// indices are positions within `indices`.
pub fn export_rows(params: &ModelParams, data: &Encoded, indices: &[usize], specs: &[MixupSpec]) -> Result<Vec<FeatureRow>> {
    if let Some(s) = specs.iter().find(|s| s.j_in_pool || s.index_i >= indices.len() || s.index_j >= indices.len()) {
        return Err(Error::Config(format!("export spec {s:?} does not refer to the exported examples")));
    }
    let c = data.num_classes;
    let mut originals = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(CHUNK) {
        let feats = params.cls_features(&data.batch(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let mut y = vec![0.0; c];
            y[data.labels[i]] = 1.0;
            originals.push((y, feats.row(r).to_vec()));
        }
    }
    let mut mixed = Vec::with_capacity(specs.len());
    let batch = data.batch(indices);
    for chunk in specs.chunks(CHUNK) {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params, false);
        let m = materialize(&mut tape, &vars, data, &batch, chunk, &[])?;
        let f = cls_features(&mut tape, &vars, m.emb, &m.mask, None)?;
        let f = tape.value(f);
        for r in 0..chunk.len() {
            mixed.push((m.labels.row(r).to_vec(), f.row(r).to_vec()));
        }
    }
    let mut rows = Vec::with_capacity(indices.len() + specs.len());
    for (pos, (y, feats)) in originals.into_iter().enumerate() {
        rows.push(FeatureRow {
            id: rows.len(),
            parent_i: indices[pos],
            parent_j: indices[pos],
            lambda: 1.0,
            soft_label: y,
            features: feats,
        });
        for (s, (y, feats)) in specs.iter().zip(&mixed).filter(|(s, _)| s.index_i == pos) {
            rows.push(FeatureRow {
                id: rows.len(),
                parent_i: indices[s.index_i],
                parent_j: indices[s.index_j],
                lambda: s.lambda,
                soft_label: y.clone(),
                features: feats.clone(),
            });
        }
    }
    Ok(rows)
}

/// Writes [`export_rows`] as CSV: `id,parent_i,parent_j,lambda,y0..,f0..`.
/// Returns the number of data rows.
pub fn export_cls_features(
    params: &ModelParams,
    data: &Encoded,
    indices: &[usize],
    specs: &[MixupSpec],
    out_path: impl AsRef<Path>,
) -> Result<usize> {
    let rows = export_rows(params, data, indices, specs)?;
    let mut out = BufWriter::new(File::create(out_path)?);
    let mut header = vec!["id".to_string(), "parent_i".into(), "parent_j".into(), "lambda".into()];
    header.extend((0..data.num_classes).map(|k| format!("y{k}")));
    header.extend((0..params.config.hidden_dim).map(|k| format!("f{k}")));
    writeln!(out, "{}", header.join(","))?;
    for r in &rows {
        write!(out, "{},{},{},{}", r.id, r.parent_i, r.parent_j, r.lambda)?;
        for v in r.soft_label.iter().chain(&r.features) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(rows.len())
}

/// Up to `n` example indices split evenly across classes, seeded.
pub fn balanced_sample(data: &Encoded, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = n / data.num_classes.max(1);
    let mut out = Vec::with_capacity(n);
    for class in 0..data.num_classes {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        members.shuffle(&mut rng);
        out.extend(members.into_iter().take(per));
    }
    out.shuffle(&mut rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::SyntheticTask;
    use crate::data::Vocab;
    use crate::model::ModelConfig;

    fn fixture() -> (ModelParams, Encoded) {
        let (train, _) = SyntheticTask::default().splits(30, 1, 5);
        let vocab = Vocab::build(&train.examples, 1, 1000).unwrap();
        let data = Encoded::new(&train.examples, &vocab, 16, 2).unwrap();
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
        (ModelParams::init_random(&cfg, 9).unwrap(), data)
    }

    #[test]
    fn originals_only_and_endpoint_rows() {
        let (params, data) = fixture();
        let idx = balanced_sample(&data, 10, 1);
        assert_eq!(idx.len(), 10);
        let rows = export_rows(&params, &data, &idx, &[]).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.features.len() == 8));
        let spec = MixupSpec {
            index_i: 3,
            index_j: 5,
            j_in_pool: false,
            lambda: 1.0,
        };
        let with = export_rows(&params, &data, &idx, &[spec]).unwrap();
        assert_eq!(with.len(), 11);
        let parent = &with[3];
        let child = &with[4];
        assert_eq!(child.parent_i, parent.parent_i);
        assert_eq!(child.features, parent.features);
        assert_eq!(child.soft_label, parent.soft_label);
    }

    #[test]
    fn csv_has_header_and_columns() {
        let (params, data) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let n = export_cls_features(&params, &data, &[0, 1, 2], &[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(n, 3);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 4 + 2 + 8);
        assert_eq!(lines[1].split(',').count(), 4 + 2 + 8);
    }
}
