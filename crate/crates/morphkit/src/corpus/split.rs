//! Deterministic corpus splitting for corpora that arrive unsplit.

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SplitCorpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Partition sentences by `(train, dev, test)` ratios. Deterministic for a
/// fixed seed; sizes are exact up to rounding.
pub fn split_corpus(
    sentences: &[Sentence],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitCorpus> {
    let (r_train, r_dev, r_test) = ratios;
    let sum = r_train + r_dev + r_test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {r_train} + {r_dev} + {r_test} = {sum}"
        )));
    }
    if r_train < 0.0 || r_dev < 0.0 || r_test < 0.0 {
        return Err(Error::invalid("split ratios must be non-negative"));
    }
    let n = sentences.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = (n as f64 * r_train).round() as usize;
    let n_dev = ((n as f64 * r_dev).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);

    let take = |idx: &[usize]| idx.iter().map(|&i| sentences[i].clone()).collect();
    Ok(SplitCorpus {
        train: take(&order[..n_train]),
        dev: take(&order[n_train..n_train + n_dev]),
        test: take(&order[n_train + n_dev..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TagSet, Token};

    fn sentences(n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| {
                Sentence::new(vec![Token {
                    surface: format!("w{i}"),
                    lemma: format!("w{i}"),
                    tags: TagSet::all_unk(),
                }])
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn ten_sentences_eight_one_one() {
        let s = split_corpus(&sentences(10), (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_split() {
        let sents = sentences(23);
        let a = split_corpus(&sents, (0.8, 0.1, 0.1), 7).unwrap();
        let b = split_corpus(&sents, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let sents = sentences(17);
        let s = split_corpus(&sents, (0.6, 0.2, 0.2), 11).unwrap();
        let mut seen: Vec<&str> = s
            .train
            .iter()
            .chain(&s.dev)
            .chain(&s.test)
            .map(|x| x.tokens[0].surface.as_str())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 17);
    }

    #[test]
    fn bad_ratio_sum_errors() {
        assert!(split_corpus(&sentences(4), (0.5, 0.5, 0.5), 0).is_err());
    }
}
