//! Scalarized feature-subset fitness: cross-validated classifier quality
//! minus a normalized feature-count penalty.

use crate::error::{Error, Result};
use crate::select::forest::{rf_fit, RfConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A bitstring over the feature pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    pub bits: Vec<bool>,
}

impl Chromosome {
    pub fn new(bits: Vec<bool>) -> Chromosome {
        Chromosome { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessMetric {
    /// Micro-averaged F1 pooled over the validation folds. With one label
    /// per instance this equals accuracy, but it is the quantity named by
    /// the selection procedure.
    MicroF1,
    Accuracy,
}

#[derive(Debug, Clone, Copy)]
pub struct FitnessConfig {
    /// Weight of the normalized feature-count penalty.
    pub alpha: f64,
    pub folds: usize,
    pub metric: FitnessMetric,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            alpha: 0.05,
            folds: 3,
            metric: FitnessMetric::MicroF1,
        }
    }
}

/// Rows of per-token feature codes with their class labels.
#[derive(Debug, Clone)]
pub struct SelectionDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl SelectionDataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>) -> Result<SelectionDataset> {
        if x.len() != y.len() {
            return Err(Error::Shape {
                op: "selection dataset",
                lhs: vec![x.len()],
                rhs: vec![y.len()],
            });
        }
        if x.len() < 2 {
            return Err(Error::invalid("selection dataset needs at least 2 rows"));
        }
        Ok(SelectionDataset { x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map(|r| r.len()).unwrap_or(0)
    }
}

fn mask_rows(x: &[Vec<f64>], bits: &[bool]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            row.iter()
                .zip(bits)
                .filter_map(|(&v, &keep)| keep.then_some(v))
                .collect()
        })
        .collect()
}

fn majority_class(y: &[usize]) -> usize {
    let max = y.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &c in y {
        counts[c] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Mix the run seed with the chromosome bits so identical masks always see
/// identical randomness: fitness is a pure function of (mask, data, seed).
fn derive_seed(seed: u64, bits: &[bool]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for chunk in bits.chunks(64) {
        let mut word = 0u64;
        for (i, &b) in chunk.iter().enumerate() {
            if b {
                word |= 1 << i;
            }
        }
        h ^= word;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic fold assignment: a seed-shuffled permutation dealt round
/// robin, the same for every chromosome of a run.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f01d);
    order.shuffle(&mut rng);
    let mut assign = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assign[i] = pos % folds;
    }
    assign
}

/// Cross-validated fitness of one feature subset.
///
/// The quality term is the pooled validation metric of a forest trained on
/// the masked features; an empty mask scores the majority-class predictor.
/// The penalty term is `alpha * |F| / |U|`.
pub fn fitness(
    chrom: &Chromosome,
    data: &SelectionDataset,
    rf_cfg: &RfConfig,
    fit_cfg: &FitnessConfig,
    seed: u64,
) -> Result<f64> {
    if chrom.len() != data.n_features() {
        return Err(Error::Shape {
            op: "fitness",
            lhs: vec![chrom.len()],
            rhs: vec![data.n_features()],
        });
    }
    let folds = fit_cfg.folds.max(2).min(data.n_rows());
    let assign = fold_assignment(data.n_rows(), folds, seed);
    let masked = mask_rows(&data.x, &chrom.bits);
    let empty = chrom.count_ones() == 0;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &chrom.bits));

    let mut correct = 0usize;
    let mut total = 0usize;
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..data.n_rows()).filter(|i| assign[*i] != fold).collect();
        let val_idx: Vec<usize> = (0..data.n_rows()).filter(|i| assign[*i] == fold).collect();
        if train_idx.len() < 2 || val_idx.is_empty() {
            continue;
        }
        if empty {
            let y_train: Vec<usize> = train_idx.iter().map(|&i| data.y[i]).collect();
            let maj = majority_class(&y_train);
            correct += val_idx.iter().filter(|&&i| data.y[i] == maj).count();
            total += val_idx.len();
            continue;
        }
        let x_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| masked[i].clone()).collect();
        let y_train: Vec<usize> = train_idx.iter().map(|&i| data.y[i]).collect();
        let forest = rf_fit(&x_train, &y_train, rf_cfg, &mut rng)?;
        for &i in &val_idx {
            if forest.predict(&masked[i]) == data.y[i] {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("fitness: no validation rows"));
    }
    // Micro-F1 over pooled single-label predictions equals pooled accuracy;
    // both metric settings therefore share this computation.
    let quality = correct as f64 / total as f64;
    let penalty = fit_cfg.alpha * chrom.count_ones() as f64 / chrom.len().max(1) as f64;
    Ok(quality - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Feature 0 fully determines the label; features 1..4 are noise.
    pub(crate) fn informative_dataset(n: usize, seed: u64) -> SelectionDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            x.push(vec![
                label as f64,
                rand::Rng::gen::<f64>(&mut rng),
                rand::Rng::gen::<f64>(&mut rng),
                rand::Rng::gen::<f64>(&mut rng),
            ]);
            y.push(label);
        }
        SelectionDataset::new(x, y).unwrap()
    }

    #[test]
    fn fitness_is_purely_functional() {
        let data = informative_dataset(60, 5);
        let c = Chromosome::new(vec![true, true, true, true]);
        let f1 = fitness(&c, &data, &RfConfig::default(), &FitnessConfig::default(), 7).unwrap();
        let f2 = fitness(&c, &data, &RfConfig::default(), &FitnessConfig::default(), 7).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn informative_feature_alone_beats_all_features() {
        let data = informative_dataset(90, 6);
        let only0 = Chromosome::new(vec![true, false, false, false]);
        let all = Chromosome::new(vec![true, true, true, true]);
        let cfg = FitnessConfig::default();
        let f0 = fitness(&only0, &data, &RfConfig::default(), &cfg, 3).unwrap();
        let fall = fitness(&all, &data, &RfConfig::default(), &cfg, 3).unwrap();
        // CV quality is 1.0 either way; the count penalty decides.
        assert!(f0 > fall, "{f0} vs {fall}");
        assert!((f0 - (1.0 - cfg.alpha * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_scores_majority_baseline() {
        let data = informative_dataset(60, 8);
        let none = Chromosome::new(vec![false; 4]);
        let f = fitness(&none, &data, &RfConfig::default(), &FitnessConfig::default(), 1).unwrap();
        // Balanced binary labels: majority baseline near 0.5, penalty 0.
        assert!((0.3..=0.7).contains(&f), "baseline fitness {f}");
    }
}
