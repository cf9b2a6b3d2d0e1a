use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{hoeffding_gap_bound, thm1_required_b};
use crate::error::{Error, Result};
use crate::mixup::{make_pairs, sample_lambda, MixupConfig, PairingMode};

/// Largest input width the testbed will enumerate.
pub const MAX_BITS: usize = 20;

/// Binary strings of a fixed width under a product-Bernoulli distribution,
/// labelled by a linear threshold teacher, with a finite class of linear
/// threshold hypotheses. Every score is linear in the input, so a mixed
/// point's score is the same interpolation of its parents' scores.
#[derive(Clone, Debug)]
pub struct Testbed {
    pub bits: usize,
    pub bit_probs: Vec<f64>,
    /// Probability of each of the `2^bits` points.
    pub point_probs: Vec<f64>,
    teacher: Scorer,
    hypotheses: Vec<Scorer>,
    /// Exact 0-1 disagreement with the teacher under the input distribution.
    pub population_risk: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Scorer {
    scores: Vec<f64>,
    theta: f64,
}

impl Scorer {
    fn new(weights: &[f64], probs: &[f64]) -> Self {
        let n = probs.len();
        let scores: Vec<f64> = (0..n)
            .map(|x| weights.iter().enumerate().filter(|(b, _)| x >> b & 1 == 1).map(|(_, w)| w).sum())
            .collect();
        // threshold at the weighted median so both classes have mass
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut mass = 0.0;
        let mut theta = scores[order[n - 1]];
        for w in order.windows(2) {
            mass += probs[w[0]];
            if mass >= 0.5 {
                theta = 0.5 * (scores[w[0]] + scores[w[1]]);
                break;
            }
        }
        Self { scores, theta }
    }

    fn label(&self, s: f64) -> bool {
        s > self.theta
    }
}

impl Testbed {
    /// Hypothesis weights are the teacher's plus Gaussian noise, so the class
    /// holds near misses but not the teacher itself.
    pub fn new(bits: usize, num_hypotheses: usize, seed: u64) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::Config(format!("testbed width must be 1..={MAX_BITS} bits, got {bits}")));
        }
        if num_hypotheses == 0 {
            return Err(Error::Config("hypothesis class must be nonempty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bit_probs: Vec<f64> = (0..bits).map(|_| rng.random_range(0.2..0.8)).collect();
        let point_probs: Vec<f64> = (0..1usize << bits)
            .map(|x| {
                bit_probs
                    .iter()
                    .enumerate()
                    .map(|(b, &p)| if x >> b & 1 == 1 { p } else { 1.0 - p })
                    .product()
            })
            .collect();
        let std = Normal::new(0.0, 1.0).unwrap();
        let wf: Vec<f64> = (0..bits).map(|_| std.sample(&mut rng)).collect();
        let teacher = Scorer::new(&wf, &point_probs);
        let noise = Normal::new(0.0, 0.6).unwrap();
        let hypotheses: Vec<Scorer> = (0..num_hypotheses)
            .map(|_| {
                let w: Vec<f64> = wf.iter().map(|v| v + noise.sample(&mut rng)).collect();
                Scorer::new(&w, &point_probs)
            })
            .collect();
        let population_risk = hypotheses
            .iter()
            .map(|h| {
                (0..point_probs.len())
                    .filter(|&x| h.label(h.scores[x]) != teacher.label(teacher.scores[x]))
                    .map(|x| point_probs[x])
                    .sum()
            })
            .collect();
        Ok(Self {
            bits,
            bit_probs,
            point_probs,
            teacher,
            hypotheses,
            population_risk,
        })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        self.bit_probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| rng.random_bool(p))
            .fold(0, |x, (b, _)| x | 1 << b)
    }

    /// 0-1 loss of hypothesis `k` at the point `λ·x_i + (1−λ)·x_j`.
    pub fn mixed_loss(&self, k: usize, i: usize, j: usize, lambda: f64) -> f64 {
        let mix = |s: &Scorer| s.label(lambda * s.scores[i] + (1.0 - lambda) * s.scores[j]);
        if mix(&self.hypotheses[k]) != mix(&self.teacher) {
            1.0
        } else {
            0.0
        }
    }

    pub fn loss(&self, k: usize, x: usize) -> f64 {
        self.mixed_loss(k, x, x, 1.0)
    }

    /// Population-risk minimizer; the first one wins ties.
    pub fn best_hypothesis(&self) -> usize {
        argmin(&self.population_risk)
    }

    /// Estimate of `∫ l(f, g*)(p − q)` for `q` the mixup distribution: the
    /// exact risk under `p` minus a Monte-Carlo risk over mixed pairs.
    pub fn shift_triangle(&self, beta_alpha: f64, samples: usize, rng: &mut impl Rng) -> Result<f64> {
        if samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        let cfg = MixupConfig {
            beta_alpha,
            ..Default::default()
        };
        cfg.validate()?;
        let k = self.best_hypothesis();
        let mut total = 0.0;
        for _ in 0..samples {
            let (i, j) = (self.draw(rng), self.draw(rng));
            total += self.mixed_loss(k, i, j, sample_lambda(&cfg, rng));
        }
        Ok(self.population_risk[k] - total / samples as f64)
    }

    /// Loss rows `[hypothesis][sample]` for a list of points.
    pub fn loss_matrix(&self, sample: &[usize]) -> Vec<Vec<f64>> {
        (0..self.num_hypotheses())
            .map(|k| sample.iter().map(|&x| self.loss(k, x)).collect())
            .collect()
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Nearest-rank quantile `q ∈ [0, 1]` of `values`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub a: usize,
    pub b_mix: usize,
    pub trials: usize,
    pub delta: f64,
    pub g_cardinality: usize,
    /// Hoeffding bound at `n = a + b_mix`.
    pub bound_value: f64,
    /// Fraction of trials whose augmented gap is within `bound_value`.
    pub coverage_fraction: f64,
    pub passed: bool,
    /// `(1−δ)` quantile of the gap of the empirical minimizer on originals
    /// only, a surrogate for ε_p.
    pub eps_p_surrogate: f64,
    /// The same quantile with the mixup points added, a surrogate for ε*.
    pub eps_star_surrogate: f64,
    pub mean_gap_original: f64,
    pub mean_gap_augmented: f64,
    /// Finite-class threshold on `b` evaluated at the ε_p surrogate and the
    /// supplied shift term, when that is not vacuous.
    pub required_b: Option<u64>,
    /// Block count `⌊(a + b_mix)/a⌋`.
    pub gamma: u64,
}

/// Repeated draws of `a` originals from the input distribution plus `b_mix`
/// mixup points, each pairing an original with a fresh independent draw.
/// Gaps are exact population risk minus empirical risk of the empirical
/// risk minimizer.
#[allow(clippy::too_many_arguments)]
pub fn empirical_gap_experiment(
    testbed: &Testbed,
    a: usize,
    b_mix: usize,
    trials: usize,
    delta: f64,
    triangle: f64,
    beta_alpha: f64,
    rng: &mut impl Rng,
) -> Result<BoundReport> {
    if a == 0 || trials == 0 {
        return Err(Error::Config("a and trials must be positive".into()));
    }
    let g = testbed.num_hypotheses();
    let bound_value = hoeffding_gap_bound(1.0, g as f64, delta, (a + b_mix) as u64)?;
    let ratio = b_mix.div_ceil(a);
    let mix_cfg = MixupConfig {
        beta_alpha,
        mixup_ratio: ratio,
        pairing: PairingMode::IndependentExtra,
        seed: 0,
    };
    mix_cfg.validate()?;
    let mut gaps_p = Vec::with_capacity(trials);
    let mut gaps_aug = Vec::with_capacity(trials);
    let mut orig_loss = vec![0.0; g];
    let mut aug_loss = vec![0.0; g];
    for _ in 0..trials {
        let sample: Vec<usize> = (0..a).map(|_| testbed.draw(rng)).collect();
        for (k, l) in orig_loss.iter_mut().enumerate() {
            *l = sample.iter().map(|&x| testbed.loss(k, x)).sum();
        }
        let k = argmin(&orig_loss);
        let gap_p = testbed.population_risk[k] - orig_loss[k] / a as f64;
        gaps_p.push(gap_p);
        if b_mix == 0 {
            gaps_aug.push(gap_p);
            continue;
        }
        let pool: Vec<usize> = (0..ratio * a).map(|_| testbed.draw(rng)).collect();
        let mut specs = make_pairs(a, &mix_cfg, rng, pool.len())?;
        specs.truncate(b_mix);
        for (k, l) in aug_loss.iter_mut().enumerate() {
            *l = orig_loss[k]
                + specs
                    .iter()
                    .map(|s| testbed.mixed_loss(k, sample[s.index_i], pool[s.index_j], s.lambda))
                    .sum::<f64>();
        }
        let k = argmin(&aug_loss);
        gaps_aug.push(testbed.population_risk[k] - aug_loss[k] / (a + b_mix) as f64);
    }
    let covered = gaps_aug.iter().filter(|&&gap| gap <= bound_value).count();
    let coverage_fraction = covered as f64 / trials as f64;
    let eps_p_surrogate = quantile(&gaps_p, 1.0 - delta);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(BoundReport {
        a,
        b_mix,
        trials,
        delta,
        g_cardinality: g,
        bound_value,
        coverage_fraction,
        passed: coverage_fraction >= 1.0 - delta,
        eps_p_surrogate,
        eps_star_surrogate: quantile(&gaps_aug, 1.0 - delta),
        mean_gap_original: mean(&gaps_p),
        mean_gap_augmented: mean(&gaps_aug),
        required_b: thm1_required_b(1.0, g as f64, delta, a as f64, eps_p_surrogate, triangle).ok(),
        gamma: ((a + b_mix) / a) as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_and_risks_are_proper() {
        let tb = Testbed::new(8, 16, 1).unwrap();
        let total: f64 = tb.point_probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(tb.population_risk.iter().all(|r| (0.0..=1.0).contains(r)));
        assert!(Testbed::new(MAX_BITS + 1, 4, 0).is_err());
    }

    #[test]
    fn zero_mix_reduces_to_plain_experiment() {
        let tb = Testbed::new(6, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = empirical_gap_experiment(&tb, 50, 0, 100, 0.1, 0.0, 0.4, &mut rng).unwrap();
        assert_eq!(r.eps_p_surrogate, r.eps_star_surrogate);
        assert_eq!(r.mean_gap_original, r.mean_gap_augmented);
        assert!((0.0..=1.0).contains(&r.coverage_fraction));
        assert_eq!(r.gamma, 1);
    }

    #[test]
    fn quantile_nearest_rank() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.9), 4.0);
        assert_eq!(quantile(&[5.0], 0.0), 5.0);
    }

    #[test]
    fn shift_term_is_bounded() {
        let tb = Testbed::new(6, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = tb.shift_triangle(0.4, 2000, &mut rng).unwrap();
        assert!(d.abs() <= 1.0);
    }
}
