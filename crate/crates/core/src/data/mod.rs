//! Corpus ingestion, vocabulary, encoding and batching.
//!
//! Tokenization is a lowercase whitespace-and-punctuation splitter rather than
//! WordPiece. Sentence pairs are joined into one `[SEP]`-separated sequence
//! with no segment embeddings.

pub mod synthetic;
mod tsv;

pub use tsv::{load_tsv, merge_augmented, Schema};

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// One labeled sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: usize,
    /// True for examples merged from an external augmentation file.
    #[serde(default)]
    pub augmented: bool,
}

impl Example {
    pub fn new(text_a: impl Into<String>, label: usize) -> Self {
        Self {
            text_a: text_a.into(),
            text_b: None,
            label,
            augmented: false,
        }
    }

    pub fn pair(text_a: impl Into<String>, text_b: impl Into<String>, label: usize) -> Self {
        Self {
            text_b: Some(text_b.into()),
            ..Self::new(text_a, label)
        }
    }
}

/// Examples plus the label strings their ids refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }
}

/// Lowercases and splits on whitespace; every non-alphanumeric character
/// becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '_' {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved ids first, then the given tokens in order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in tokens {
            if !RESERVED.contains(&t.as_str()) {
                all.push(t);
            }
        }
        let mut ids = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens: all, ids })
    }

    /// Tokens with frequency ≥ `min_freq`, most frequent first and ties broken
    /// lexicographically, truncated so the total size (reserved included) is
    /// at most `max_size`.
    pub fn build(examples: &[Example], min_freq: usize, max_size: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for ex in examples {
            for t in tokenize(&ex.text_a).into_iter().chain(ex.text_b.iter().flat_map(|b| tokenize(b))) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size.saturating_sub(RESERVED.len()));
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[CLS] a [SEP] (b [SEP])`, truncated to `max_len` and padded with `[PAD]`.
    /// Returns ids and a mask that is true on real tokens.
    pub fn encode(&self, example: &Example, max_len: usize) -> Result<(Vec<usize>, Vec<bool>)> {
        if max_len < 3 {
            return Err(Error::Config(format!("max_len must be at least 3, got {max_len}")));
        }
        let a = tokenize(&example.text_a);
        if a.is_empty() {
            return Err(Error::Data(format!("text_a {:?} has no tokens", example.text_a)));
        }
        let mut ids = vec![CLS];
        ids.extend(a.iter().map(|t| self.id(t)));
        ids.push(SEP);
        if let Some(b) = &example.text_b {
            ids.extend(tokenize(b).iter().map(|t| self.id(t)));
            ids.push(SEP);
        }
        ids.truncate(max_len);
        let real = ids.len();
        ids.resize(max_len, PAD);
        let mask = (0..max_len).map(|i| i < real).collect();
        Ok((ids, mask))
    }

    /// Tokens at real positions.
    pub fn decode(&self, ids: &[usize], mask: &[bool]) -> Vec<String> {
        ids.iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&id, _)| self.token(id).unwrap_or("[UNK]").to_string())
            .collect()
    }
}

/// Encoded minibatch. Row `r` of every field describes example `indices[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub labels: Tensor,
    pub indices: Vec<usize>,
    pub n: usize,
    pub seq_len: usize,
}

impl Batch {
    pub fn num_classes(&self) -> usize {
        self.labels.shape()[1]
    }

    pub fn row_ids(&self, r: usize) -> &[usize] {
        &self.ids[r * self.seq_len..(r + 1) * self.seq_len]
    }

    pub fn row_mask(&self, r: usize) -> &[bool] {
        &self.mask[r * self.seq_len..(r + 1) * self.seq_len]
    }

    /// Every row starts with a real `[CLS]`, masks are prefixes, and label rows
    /// are one-hot.
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.n * self.seq_len || self.mask.len() != self.ids.len() {
            return Err(Error::Data("batch arrays disagree with n × seq_len".into()));
        }
        if self.labels.shape()[0] != self.n {
            return Err(Error::Data("label rows disagree with batch size".into()));
        }
        for r in 0..self.n {
            if self.row_ids(r)[0] != CLS || !self.row_mask(r)[0] {
                return Err(Error::Data(format!("row {r} does not start with [CLS]")));
            }
            if self.row_mask(r).windows(2).any(|w| !w[0] && w[1]) {
                return Err(Error::Data(format!("row {r} has a real token after padding")));
            }
            let ones = self.labels.row(r).iter().filter(|&&v| v == 1.0).count();
            let zeros = self.labels.row(r).iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != self.num_classes() {
                return Err(Error::Data(format!("row {r} label is not one-hot")));
            }
        }
        Ok(())
    }
}

/// A fully encoded example list, ready to be sliced into batches.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub ids: Vec<Vec<usize>>,
    pub masks: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
    pub augmented: Vec<bool>,
    pub num_classes: usize,
    pub seq_len: usize,
}

impl Encoded {
    pub fn new(examples: &[Example], vocab: &Vocab, seq_len: usize, num_classes: usize) -> Result<Self> {
        let mut ids = Vec::with_capacity(examples.len());
        let mut masks = Vec::with_capacity(examples.len());
        for ex in examples {
            if ex.label >= num_classes {
                return Err(Error::Data(format!("label {} out of range for {num_classes} classes", ex.label)));
            }
            let (i, m) = vocab.encode(ex, seq_len)?;
            ids.push(i);
            masks.push(m);
        }
        Ok(Self {
            ids,
            masks,
            labels: examples.iter().map(|e| e.label).collect(),
            augmented: examples.iter().map(|e| e.augmented).collect(),
            num_classes,
            seq_len,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let n = indices.len();
        let mut ids = Vec::with_capacity(n * self.seq_len);
        let mut mask = Vec::with_capacity(n * self.seq_len);
        let mut labels = vec![0.0; n * self.num_classes];
        for (r, &i) in indices.iter().enumerate() {
            ids.extend_from_slice(&self.ids[i]);
            mask.extend_from_slice(&self.masks[i]);
            labels[r * self.num_classes + self.labels[i]] = 1.0;
        }
        Batch {
            ids,
            mask,
            labels: Tensor::from_parts(vec![n, self.num_classes], labels),
            indices: indices.to_vec(),
            n,
            seq_len: self.seq_len,
        }
    }

    /// Minibatches covering every example once. With a seed the order is a
    /// seeded shuffle, otherwise file order. The last partial batch is kept.
    pub fn batches(&self, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Batch> {
        assert!(batch_size >= 1, "batch_size must be positive");
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        order.chunks(batch_size).map(|c| self.batch(c)).collect()
    }
}

/// Encodes `examples` and splits them into minibatches.
pub fn collate(
    examples: &[Example],
    vocab: &Vocab,
    seq_len: usize,
    num_classes: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    Ok(Encoded::new(examples, vocab, seq_len, num_classes)?.batches(batch_size, shuffle_seed))
}

/// `floor(fraction · N)` examples drawn uniformly without replacement, kept in
/// their original order. `fraction = 1` returns the input unchanged.
pub fn subsample(examples: &[Example], fraction: f64, seed: u64) -> Result<Vec<Example>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(examples.to_vec());
    }
    let count = (fraction * examples.len() as f64 + 1e-9).floor() as usize;
    if count == 0 {
        return Err(Error::Data(format!(
            "fraction {fraction} of {} examples is empty",
            examples.len()
        )));
    }
    let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), examples.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| examples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Vec<Example> {
        texts.iter().map(|t| Example::new(*t, 0)).collect()
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn vocab_frequency_threshold() {
        let v = Vocab::build(&corpus(&["a a b"]), 2, 100).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn vocab_order_is_deterministic() {
        let c = corpus(&["z y x y z z", "q"]);
        let a = Vocab::build(&c, 1, 100).unwrap();
        let b = Vocab::build(&c, 1, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.tokens()[4..], &["z", "y", "q", "x"]);
    }

    #[test]
    fn vocab_truncation() {
        let v = Vocab::build(&corpus(&["a a b c d"]), 1, 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4), Some("a"));
    }

    #[test]
    fn encode_layout() {
        let v = Vocab::build(&corpus(&["good movie"]), 1, 100).unwrap();
        let (ids, mask) = v.encode(&Example::new("good film", 0), 6).unwrap();
        assert_eq!(ids, vec![CLS, v.id("good"), UNK, SEP, PAD, PAD]);
        assert_eq!(mask, vec![true, true, true, true, false, false]);

        let (ids, _) = v.encode(&Example::pair("good", "movie", 0), 8).unwrap();
        assert_eq!(&ids[..5], &[CLS, v.id("good"), SEP, v.id("movie"), SEP]);
    }

    #[test]
    fn encode_truncates_and_rejects_empty() {
        let v = Vocab::build(&corpus(&["w"]), 1, 100).unwrap();
        let long = vec!["w"; 16].join(" ");
        let (ids, mask) = v.encode(&Example::new(long, 0), 6).unwrap();
        assert_eq!(ids.len(), 6);
        assert!(mask.iter().all(|&m| m));
        assert!(v.encode(&Example::new(" ,", 0), 6).is_ok());
        assert!(v.encode(&Example::new("   ", 0), 6).is_err());
        assert!(v.encode(&Example::new("w", 0), 2).is_err());
    }

    #[test]
    fn subsample_rules() {
        let ex: Vec<Example> = (0..100).map(|i| Example::new(format!("t{i}"), 0)).collect();
        assert_eq!(subsample(&ex, 1.0, 0).unwrap(), ex);
        let s = subsample(&ex, 0.1, 4).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s, subsample(&ex, 0.1, 4).unwrap());
        assert!(subsample(&ex, 0.001, 4).is_err());
        assert!(subsample(&ex, 0.0, 4).is_err());
        assert!(subsample(&ex, 1.5, 4).is_err());
    }

    #[test]
    fn collate_sizes_and_determinism() {
        let ex: Vec<Example> = (0..10).map(|i| Example::new(format!("t{i}"), i % 2)).collect();
        let v = Vocab::build(&ex, 1, 100).unwrap();
        let b = collate(&ex, &v, 5, 2, 4, Some(1)).unwrap();
        assert_eq!(b.iter().map(|b| b.n).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(b, collate(&ex, &v, 5, 2, 4, Some(1)).unwrap());
        for batch in &b {
            batch.validate().unwrap();
        }
        let mut seen: Vec<usize> = b.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(collate(&ex, &v, 5, 2, 0, None).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec("[a-e]{1,3}", 1..12), max_len in 3usize..16) {
            let text = words.join(" ");
            let v = Vocab::build(&corpus(&["a b c aa bb"]), 1, 100).unwrap();
            let (ids, mask) = v.encode(&Example::new(text.clone(), 0), max_len).unwrap();
            let mut expected: Vec<String> = vec!["[CLS]".into()];
            expected.extend(tokenize(&text).into_iter().map(|t| if v.id(&t) == UNK { "[UNK]".into() } else { t }));
            expected.push("[SEP]".into());
            expected.truncate(max_len);
            prop_assert_eq!(v.decode(&ids, &mask), expected);
        }

        #[test]
        fn subsample_is_duplicate_free_subset(n in 1usize..200, frac in 0.05f64..1.0, seed in 0u64..50) {
            let ex: Vec<Example> = (0..n).map(|i| Example::new(format!("t{i}"), 0)).collect();
            if let Ok(s) = subsample(&ex, frac, seed) {
                let mut names: Vec<&str> = s.iter().map(|e| e.text_a.as_str()).collect();
                let len = names.len();
                names.dedup();
                prop_assert_eq!(names.len(), len);
                prop_assert!(s.iter().all(|e| ex.contains(e)));
            }
        }
    }
}
