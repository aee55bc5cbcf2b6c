//! Self-describing model checkpoints: a JSON container holding the
//! hyperparameters, vocabulary, tag domains, feature masks, and every
//! named parameter tensor.

use crate::autodiff::Tensor;
use crate::corpus::{CharVocab, Tag, TagDomain, TagDomains};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::lingfeat::{FeatureMask, FeaturePool};
use crate::model::{Model, ModelConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "morphkit-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    /// In-vocabulary characters in id order (sentinels implied).
    vocab_chars: String,
    vocab_hash: u64,
    /// Tag name -> labels in id order.
    domains: Vec<(String, Vec<String>)>,
    /// Tag name -> mask bitstring over the feature pool.
    masks: Vec<(String, String)>,
    params: Vec<ParamRecord>,
}

fn vocab_hash(chars: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in chars.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let chars: String = model.vocab.chars().iter().collect();
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        config: model.config.clone(),
        vocab_hash: vocab_hash(&chars),
        vocab_chars: chars,
        domains: Tag::ALL
            .iter()
            .map(|&t| {
                (
                    t.name().to_string(),
                    model.domains.get(t).labels().to_vec(),
                )
            })
            .collect(),
        masks: Tag::ALL
            .iter()
            .map(|&t| (t.name().to_string(), model.masks[t.index()].bitstring()))
            .collect(),
        params: model
            .params()
            .iter()
            .map(|(name, tensor)| ParamRecord {
                name: name.to_string(),
                shape: tensor.shape().to_vec(),
                data: tensor.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    write_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "{} is not a model checkpoint (format {:?})",
            path.display(),
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (this build reads {VERSION})",
            file.version
        )));
    }
    if vocab_hash(&file.vocab_chars) != file.vocab_hash {
        return Err(Error::Checkpoint(
            "vocabulary hash mismatch; checkpoint is corrupt".into(),
        ));
    }
    let vocab = CharVocab::from_chars(file.vocab_chars.chars());

    let mut domains: Vec<TagDomain> = Vec::with_capacity(6);
    for tag in Tag::ALL {
        let labels = file
            .domains
            .iter()
            .find(|(n, _)| n == tag.name())
            .map(|(_, l)| l.clone())
            .ok_or_else(|| {
                Error::Checkpoint(format!("missing {} domain in checkpoint", tag.name()))
            })?;
        domains.push(TagDomain::from_ordered(tag, labels)?);
    }
    let domains = TagDomains::new(domains.try_into().expect("six domains"));

    let pool = FeaturePool::standard();
    let mut masks: Vec<FeatureMask> = Vec::with_capacity(6);
    for tag in Tag::ALL {
        let bits = file
            .masks
            .iter()
            .find(|(n, _)| n == tag.name())
            .map(|(_, b)| b.clone())
            .ok_or_else(|| {
                Error::Checkpoint(format!("missing {} mask in checkpoint", tag.name()))
            })?;
        let mask = FeatureMask::from_bitstring(&bits)?;
        if mask.len() != pool.len() {
            return Err(Error::Checkpoint(format!(
                "{} mask has {} bits, this build's pool has {}",
                tag.name(),
                mask.len(),
                pool.len()
            )));
        }
        masks.push(mask);
    }

    let mut model = Model::new(
        file.config,
        vocab,
        domains,
        masks.try_into().expect("six masks"),
        0,
    )?;
    for rec in file.params {
        let id = model.params().find(&rec.name).ok_or_else(|| {
            Error::Checkpoint(format!("unknown parameter {:?} in checkpoint", rec.name))
        })?;
        let expected = model.params().get(id).shape().to_vec();
        if expected != rec.shape {
            return Err(Error::Checkpoint(format!(
                "parameter {:?} has shape {:?}, expected {:?}",
                rec.name, rec.shape, expected
            )));
        }
        *model.params_mut().get_mut(id) = Tensor::new(rec.shape, rec.data)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build_model() -> Model {
        let pool = FeaturePool::standard();
        let vocab = CharVocab::from_chars("abdegikmnoprstu".chars());
        let masks = std::array::from_fn(|i| {
            FeatureMask::from_indices(pool.len(), &[0, i + 1, i + 10])
        });
        Model::new(
            ModelConfig::toy(),
            vocab,
            crate::model::tests::tiny_domains(),
            masks,
            77,
        )
        .unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = build_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(loaded.domains, model.domains);
        assert_eq!(loaded.masks, model.masks);
        assert_eq!(loaded.params().len(), model.params().len());
        for ((na, ta), (nb, tb)) in loaded.params().iter().zip(model.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "parameter {na} must round-trip bit-exactly");
        }
    }

    #[test]
    fn rejects_non_checkpoint_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, "{\"format\": \"something-else\"}").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
