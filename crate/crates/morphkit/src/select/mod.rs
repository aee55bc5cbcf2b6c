//! Multi-objective feature selection: a genetic algorithm scalarizing
//! classifier quality against feature count, with a from-scratch random
//! forest as the fitness oracle.

mod fitness;
mod forest;
mod ga;

pub use fitness::{fitness, Chromosome, FitnessConfig, FitnessMetric, SelectionDataset};
pub use forest::{gini, rf_fit, DecisionTree, RandomForest, RfConfig};
pub use ga::{exhaustive_best, ga_run, FitnessReport, GaConfig, GenStats, ParetoPoint};

use crate::error::{Error, Result};
use crate::lingfeat::{FeatureMask, FeaturePool};

/// Render a selected mask as the `features.<tag>.mask` text format:
/// header, bitstring, then the selected slot names.
pub fn mask_file_string(
    pool: &FeaturePool,
    tag_name: &str,
    mask: &FeatureMask,
    fitness: f64,
) -> String {
    let names: Vec<&str> = mask
        .selected_indices()
        .into_iter()
        .map(|i| pool.name(i))
        .collect();
    format!(
        "# feature mask v1\ntag {tag_name}\npool {}\nfitness {fitness}\nbits {}\nfeatures {}\n",
        pool.len(),
        mask.bitstring(),
        names.join(", ")
    )
}

/// Parse a mask file produced by [`mask_file_string`].
pub fn parse_mask_file(pool: &FeaturePool, text: &str) -> Result<(String, FeatureMask)> {
    let mut tag = None;
    let mut bits = None;
    let mut declared_pool = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("tag ") {
            tag = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("pool ") {
            declared_pool = Some(v.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("mask file: bad pool count {v:?}"))
            })?);
        } else if let Some(v) = line.strip_prefix("bits ") {
            bits = Some(FeatureMask::from_bitstring(v.trim())?);
        }
        // `fitness` and `features` lines are informational.
    }
    let tag = tag.ok_or_else(|| Error::Config("mask file: missing tag line".into()))?;
    let bits = bits.ok_or_else(|| Error::Config("mask file: missing bits line".into()))?;
    if let Some(n) = declared_pool {
        if n != pool.len() {
            return Err(Error::Config(format!(
                "mask file declares pool {n}, this build's pool has {}",
                pool.len()
            )));
        }
    }
    if bits.len() != pool.len() {
        return Err(Error::Config(format!(
            "mask bitstring length {} does not match pool size {}",
            bits.len(),
            pool.len()
        )));
    }
    Ok((tag, bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_file_round_trip() {
        let pool = FeaturePool::standard();
        let mask = FeatureMask::from_indices(pool.len(), &[0, 3, 10]);
        let text = mask_file_string(pool, "POS", &mask, 0.91);
        let (tag, parsed) = parse_mask_file(pool, &text).unwrap();
        assert_eq!(tag, "POS");
        assert_eq!(parsed, mask);
        assert!(text.contains("LoT"));
    }

    #[test]
    fn mask_file_rejects_wrong_pool() {
        let pool = FeaturePool::standard();
        let text = "tag POS\npool 3\nbits 101\n";
        assert!(parse_mask_file(pool, text).is_err());
    }
}
