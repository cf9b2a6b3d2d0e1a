use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Dataset, Example};
use crate::error::{Error, Result};

/// Column layout of a dataset TSV.
///
/// Written as `text_a[,text_b],label`, e.g. `sentence,label` or
/// `sentence1,sentence2,label`. The label column may pin its label set in
/// order with `label=neg|pos`; otherwise labels found in the file are sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: String,
    pub labels: Option<Vec<String>>,
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cols: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(2..=3).contains(&cols.len()) || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Config(format!("schema {s:?} must be text_a[,text_b],label")));
        }
        let (label, labels) = match cols[cols.len() - 1].split_once('=') {
            Some((name, set)) => (name.to_string(), Some(set.split('|').map(str::to_string).collect())),
            None => (cols[cols.len() - 1].to_string(), None),
        };
        Ok(Self {
            text_a: cols[0].to_string(),
            text_b: (cols.len() == 3).then(|| cols[1].to_string()),
            label,
            labels,
        })
    }
}

impl Schema {
    /// Same columns with the label set pinned.
    pub fn with_labels(&self, labels: &[String]) -> Self {
        Self {
            labels: Some(labels.to_vec()),
            ..self.clone()
        }
    }
}

struct Row {
    line: usize,
    text_a: String,
    text_b: Option<String>,
    label: String,
    origin: Option<usize>,
}

fn read_rows(path: &Path, schema: &Schema) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let Some((_, header)) = lines.next() else {
        return Err(parse_err(1, "missing header row".into()));
    };
    let header: Vec<&str> = header.split('\t').collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name:?}")))
    };
    let a = col(&schema.text_a)?;
    let b = schema.text_b.as_deref().map(col).transpose()?;
    let label = col(&schema.label)?;
    let origin = header.iter().position(|h| *h == "origin_index");

    let mut rows = Vec::new();
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let get = |i: usize| {
            fields
                .get(i)
                .map(|s| s.to_string())
                .ok_or_else(|| parse_err(line, format!("expected at least {} fields, got {}", i + 1, fields.len())))
        };
        let text_a = get(a)?;
        if text_a.trim().is_empty() {
            return Err(parse_err(line, "empty text".into()));
        }
        let origin = match origin.and_then(|i| fields.get(i)).map(|s| s.trim()) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| parse_err(line, format!("bad origin_index {s:?}")))?,
            ),
        };
        rows.push(Row {
            line,
            text_a,
            text_b: b.map(get).transpose()?,
            label: fields.get(label).map_or(String::new(), |s| s.trim().to_string()),
            origin,
        });
    }
    Ok(rows)
}

/// Loads examples in file order. Unknown labels (when the schema pins a label
/// set) and malformed rows are reported with their line number.
pub fn load_tsv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = read_rows(path, schema)?;
    let labels = match &schema.labels {
        Some(l) => l.clone(),
        None => rows
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let examples = rows
        .into_iter()
        .map(|r| {
            let label = labels.iter().position(|l| *l == r.label).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                msg: format!("unknown label {:?}", r.label),
            })?;
            Ok(Example {
                text_a: r.text_a,
                text_b: r.text_b,
                label,
                augmented: false,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { examples, labels })
}

/// Appends pre-generated augmented examples (e.g. backtranslations) after the
/// originals, flagged as augmented. A row with a blank label and an
/// `origin_index` inherits the label of that original.
pub fn merge_augmented(original: &Dataset, augmented_path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = augmented_path.as_ref();
    let rows = read_rows(path, &schema.with_labels(&original.labels))?;
    let mut merged = original.clone();
    for r in rows {
        let label = if r.label.is_empty() {
            let origin = r.origin.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                msg: "blank label without origin_index".into(),
            })?;
            original
                .examples
                .get(origin)
                .map(|e| e.label)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: r.line,
                    msg: format!("origin_index {origin} out of range"),
                })?
        } else {
            original.labels.iter().position(|l| *l == r.label).ok_or_else(|| {
                Error::Data(format!(
                    "{}:{}: augmented label {:?} not in the original label set {:?}",
                    path.display(),
                    r.line,
                    r.label,
                    original.labels
                ))
            })?
        };
        merged.examples.push(Example {
            text_a: r.text_a,
            text_b: r.text_b,
            label,
            augmented: true,
        });
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn schema_parsing() {
        let s: Schema = "sentence,label".parse().unwrap();
        assert_eq!(s.text_a, "sentence");
        assert!(s.text_b.is_none());
        let p: Schema = "q1,q2,label=0|1".parse().unwrap();
        assert_eq!(p.text_b.as_deref(), Some("q2"));
        assert_eq!(p.labels, Some(vec!["0".into(), "1".into()]));
        assert!("label".parse::<Schema>().is_err());
    }

    #[test]
    fn loads_single_sentence_file_in_order() {
        let f = file("sentence\tlabel\ngreat film\t1\nawful\t0\nfine\t1\n");
        let d = load_tsv(f.path(), &"sentence,label".parse().unwrap()).unwrap();
        assert_eq!(d.examples.len(), 3);
        assert_eq!(d.labels, vec!["0", "1"]);
        assert_eq!(d.examples[0].text_a, "great film");
        assert_eq!(d.examples[1].label, 0);
    }

    #[test]
    fn unknown_label_names_line() {
        let f = file("sentence\tlabel\ngood\tpos\nbad\tmaybe\n");
        let err = load_tsv(f.path(), &"sentence,label=neg|pos".parse().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = file("text\tlabel\nx\t0\n");
        assert!(load_tsv(f.path(), &"sentence,label".parse().unwrap()).is_err());
    }

    #[test]
    fn pair_file_populates_text_b() {
        let f = file("s1\ts2\tlabel\na\tb\t1\n");
        let d = load_tsv(f.path(), &"s1,s2,label".parse().unwrap()).unwrap();
        assert_eq!(d.examples[0].text_b.as_deref(), Some("b"));
    }

    #[test]
    fn merge_rules() {
        let schema: Schema = "sentence,label".parse().unwrap();
        let orig = load_tsv(file("sentence\tlabel\na\t0\nb\t1\n").path(), &schema).unwrap();

        let empty = merge_augmented(&orig, file("sentence\tlabel\n").path(), &schema).unwrap();
        assert_eq!(empty, orig);

        let aug = file("sentence\tlabel\torigin_index\na2\t0\t0\nb2\t\t1\n");
        let merged = merge_augmented(&orig, aug.path(), &schema).unwrap();
        assert_eq!(merged.examples.len(), 4);
        assert!(merged.examples[2].augmented && !merged.examples[0].augmented);
        assert_eq!(merged.examples[3].label, 1);

        let bad = file("sentence\tlabel\nz\t7\n");
        assert!(merge_augmented(&orig, bad.path(), &schema).is_err());
    }
}
