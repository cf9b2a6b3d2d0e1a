//! Randomized inputs for the embedding mixup identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixkd::mixup::{mix_batch, MixedBatch};
use mixkd::tensor::{Tape, Tensor};

pub struct Case {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub emb_i: Tensor,
    pub emb_j: Tensor,
    pub mask_i: Vec<bool>,
    pub mask_j: Vec<bool>,
    pub y_i: Tensor,
    pub y_j: Tensor,
    pub lambdas: Vec<f64>,
}

fn random_mask(rng: &mut impl Rng, n: usize, t: usize) -> Vec<bool> {
    (0..n)
        .flat_map(|_| {
            let len = rng.random_range(1..=t);
            (0..t).map(move |p| p < len)
        })
        .collect()
}

/// Embeddings are zero at padded positions, as the embedding layer produces.
fn random_emb(rng: &mut impl Rng, mask: &[bool], d: usize, n: usize, t: usize) -> Tensor {
    let data = mask
        .iter()
        .flat_map(|&m| (0..d).map(|_| if m { rng.random_range(-3.0..3.0) } else { 0.0 }).collect::<Vec<_>>())
        .collect();
    Tensor::new(vec![n, t, d], data).unwrap()
}

fn one_hot(rng: &mut impl Rng, n: usize, c: usize) -> (Tensor, Vec<usize>) {
    let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let data = ys.iter().flat_map(|&y| (0..c).map(move |k| if k == y { 1.0 } else { 0.0 })).collect();
    (Tensor::new(vec![n, c], data).unwrap(), ys)
}

pub fn random_case(rng: &mut impl Rng) -> (Case, Vec<usize>, Vec<usize>) {
    let (n, t, d, c) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..5), rng.random_range(2..5));
    let mask_i = random_mask(rng, n, t);
    let mask_j = random_mask(rng, n, t);
    let emb_i = random_emb(rng, &mask_i, d, n, t);
    let emb_j = random_emb(rng, &mask_j, d, n, t);
    let (y_i, ci) = one_hot(rng, n, c);
    let (y_j, cj) = one_hot(rng, n, c);
    let lambdas = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..=1.0),
        })
        .collect();
    let case = Case {
        n,
        t,
        d,
        emb_i,
        emb_j,
        mask_i,
        mask_j,
        y_i,
        y_j,
        lambdas,
    };
    (case, ci, cj)
}

pub fn run(case: &Case, swap: bool, lambdas: &[f64]) -> (Tensor, MixedBatch) {
    let mut tape = Tape::new();
    let a = tape.constant(case.emb_i.clone());
    let b = tape.constant(case.emb_j.clone());
    let m = if swap {
        mix_batch(&mut tape, b, a, &case.mask_j, &case.mask_i, &case.y_j, &case.y_i, lambdas)
    } else {
        mix_batch(&mut tape, a, b, &case.mask_i, &case.mask_j, &case.y_i, &case.y_j, lambdas)
    }
    .unwrap();
    (tape.value(m.emb).clone(), m)
}

/// Runs `cases` randomized checks and panics on the first violated identity.
pub fn check_algebra(cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case_no in 0..cases {
        let (case, ci, cj) = random_case(&mut rng);
        let (emb, mixed) = run(&case, false, &case.lambdas);
        let per_row = case.t * case.d;

        for r in 0..case.n {
            let l = case.lambdas[r];
            let rows = r * per_row..(r + 1) * per_row;
            let (e, ei, ej) = (&emb.data()[rows.clone()], &case.emb_i.data()[rows.clone()], &case.emb_j.data()[rows]);

            // endpoints are exact copies
            if l == 1.0 {
                assert_eq!(e, ei, "case {case_no}");
                assert_eq!(mixed.labels.row(r), case.y_i.row(r));
            }
            if l == 0.0 {
                assert_eq!(e, ej, "case {case_no}");
                assert_eq!(mixed.labels.row(r), case.y_j.row(r));
            }

            // soft labels stay on the simplex
            let s: f64 = mixed.labels.row(r).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12 && mixed.labels.row(r).iter().all(|&v| v >= 0.0), "case {case_no}");

            // one λ drives both the embeddings and the labels
            for k in 0..per_row {
                assert_eq!(e[k], l * ei[k] + (1.0 - l) * ej[k], "case {case_no}");
            }
            if ci[r] != cj[r] {
                assert_eq!(mixed.labels.row(r)[ci[r]], l);
            }

            for p in 0..case.t {
                let (mi, mj) = (case.mask_i[r * case.t + p], case.mask_j[r * case.t + p]);
                assert_eq!(mixed.mask[r * case.t + p], mi || mj);
                // where only the first sentence has tokens, the result is λ·x exactly
                if mi && !mj {
                    for k in p * case.d..(p + 1) * case.d {
                        assert_eq!(e[k], l * ei[k], "case {case_no}");
                    }
                }
            }
        }

        // swapping sides with 1 − λ gives the same batch up to rounding
        let flipped: Vec<f64> = case.lambdas.iter().map(|l| 1.0 - l).collect();
        let (emb_s, mixed_s) = run(&case, true, &flipped);
        for (a, b) in emb.data().iter().zip(emb_s.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "case {case_no}: {a} vs {b}");
        }
        for (a, b) in mixed.labels.data().iter().zip(mixed_s.labels.data()) {
            assert!((a - b).abs() <= 1e-12, "case {case_no}");
        }
        assert_eq!(mixed.mask, mixed_s.mask);
    }
}

