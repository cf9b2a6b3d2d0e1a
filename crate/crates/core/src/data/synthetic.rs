//! Seeded two-class token task used by the examples and the acceptance suite.
//!
//! Sentences are drawn from words `w0..w{V-1}`. The first `2·num_keys` words
//! are key tokens: `w0..` vote for class 1, the next block votes for class 0.
//! The clean label is the class with more votes among the inserted keys; the
//! observed label is flipped with probability `label_noise`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Example};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub vocab_words: usize,
    pub num_keys: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Maximum keys voting for the clean label.
    pub max_majority: usize,
    pub label_noise: f64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            vocab_words: 200,
            num_keys: 10,
            min_len: 6,
            max_len: 14,
            max_majority: 3,
            label_noise: 0.1,
        }
    }
}

impl SyntheticTask {
    fn word(i: usize) -> String {
        format!("w{i}")
    }

    /// Label of a sentence under the noise-free rule, if the vote is decisive.
    pub fn clean_label(&self, text: &str) -> Option<usize> {
        let (mut pos, mut neg) = (0usize, 0usize);
        for tok in text.split_whitespace() {
            let Some(i) = tok.strip_prefix('w').and_then(|s| s.parse::<usize>().ok()) else {
                continue;
            };
            if i < self.num_keys {
                pos += 1;
            } else if i < 2 * self.num_keys {
                neg += 1;
            }
        }
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => Some(1),
            std::cmp::Ordering::Less => Some(0),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn sentence(&self, rng: &mut impl Rng) -> (String, usize) {
        let clean = rng.random_range(0..2usize);
        let majority = rng.random_range(1..=self.max_majority);
        let minority = rng.random_range(0..majority);
        let len = rng.random_range(self.min_len..=self.max_len).max(majority + minority);
        let key_block = |class: usize| if class == 1 { 0 } else { self.num_keys };
        let mut words: Vec<String> = Vec::with_capacity(len);
        for _ in 0..majority {
            words.push(Self::word(key_block(clean) + rng.random_range(0..self.num_keys)));
        }
        for _ in 0..minority {
            words.push(Self::word(key_block(1 - clean) + rng.random_range(0..self.num_keys)));
        }
        while words.len() < len {
            words.push(Self::word(rng.random_range(2 * self.num_keys..self.vocab_words)));
        }
        words.shuffle(rng);
        (words.join(" "), clean)
    }

    /// `n` examples with noisy labels, deterministic per seed.
    pub fn generate(&self, n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (text, clean) = self.sentence(&mut rng);
                let label = if rng.random_bool(self.label_noise) { 1 - clean } else { clean };
                Example::new(text, label)
            })
            .collect()
    }

    /// Train and dev datasets drawn from disjoint seed streams.
    pub fn splits(&self, train: usize, dev: usize, seed: u64) -> (Dataset, Dataset) {
        let labels = vec!["0".to_string(), "1".to_string()];
        let make = |examples| Dataset {
            examples,
            labels: labels.clone(),
        };
        (
            make(self.generate(train, seed)),
            make(self.generate(dev, seed ^ 0x5eed_0000_dead_beef)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_mostly_clean() {
        let task = SyntheticTask::default();
        let a = task.generate(500, 3);
        assert_eq!(a, task.generate(500, 3));
        let agree = a
            .iter()
            .filter(|e| task.clean_label(&e.text_a) == Some(e.label))
            .count();
        let rate = agree as f64 / a.len() as f64;
        assert!((0.85..0.95).contains(&rate), "clean agreement {rate}");
        assert!(a.iter().all(|e| e.text_a.split_whitespace().count() >= task.min_len));
    }
}
