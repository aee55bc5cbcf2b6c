//! The assembled analyzer: a context-windowed conv/BiGRU tag predictor
//! with six feature-augmented heads, and an attention seq2seq lemma
//! predictor sharing the same character embedding table.

mod analyze;
mod beam;
mod checkpoint;
mod forward;

pub use analyze::{analyze, Analysis, AnalyzedToken};
pub use beam::{beam_decode, BeamHypothesis, SeqDecoder, TableDecoder};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::LemmaTeacherOutput;

use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::{lemma_classes, CharVocab, Tag, TagDomains};
use crate::error::{Error, Result};
use crate::lingfeat::{FeatureMask, FeaturePool};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Luong,
    /// Reserved name; reported as overfitting in the reference experiments
    /// and not implemented here.
    Bahdanau,
    /// Reserved name; not implemented here.
    Monotonic,
}

impl AttentionKind {
    pub fn from_name(s: &str) -> Result<AttentionKind> {
        match s.to_ascii_lowercase().as_str() {
            "luong" => Ok(AttentionKind::Luong),
            "bahdanau" => Ok(AttentionKind::Bahdanau),
            "monotonic" => Ok(AttentionKind::Monotonic),
            _ => Err(Error::Config(format!(
                "unknown attention kind {s:?} (luong | bahdanau | monotonic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingPreset {
    /// Parallel max and average pooling, concatenated (the reference).
    MaxAvg,
    /// Ablation: max pooling only.
    MaxOnly,
    /// Ablation: average pooling only.
    AvgOnly,
}

impl PoolingPreset {
    pub fn from_name(s: &str) -> Result<PoolingPreset> {
        match s.to_ascii_lowercase().as_str() {
            "max+avg" | "maxavg" | "am" => Ok(PoolingPreset::MaxAvg),
            "max" => Ok(PoolingPreset::MaxOnly),
            "avg" => Ok(PoolingPreset::AvgOnly),
            _ => Err(Error::Config(format!(
                "unknown pooling preset {s:?} (max+avg | max | avg)"
            ))),
        }
    }

    fn blocks_per_width(self) -> usize {
        match self {
            PoolingPreset::MaxAvg => 2,
            _ => 1,
        }
    }
}

/// Architecture hyperparameters. Defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cw: usize,
    pub len_max: usize,
    pub embed_dim: usize,
    pub conv_maps: usize,
    pub conv_widths: Vec<usize>,
    pub gru_hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub decoder_hidden: usize,
    pub noise_sigma: f64,
    pub dropout: f64,
    pub head_dropout: f64,
    pub attention: AttentionKind,
    pub pooling: PoolingPreset,
    pub beam_width: usize,
    pub beam_length_norm: bool,
    pub tie_conv_slots: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cw: 4,
            len_max: 18,
            embed_dim: 64,
            conv_maps: 64,
            conv_widths: vec![4, 5],
            gru_hidden: 64,
            dense1: 64,
            dense2: 128,
            decoder_hidden: 64,
            noise_sigma: 0.1,
            dropout: 0.5,
            head_dropout: 0.5,
            attention: AttentionKind::Luong,
            pooling: PoolingPreset::MaxAvg,
            beam_width: 4,
            beam_length_norm: false,
            tie_conv_slots: false,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration for the synthetic corpus experiments:
    /// small dimensions, a one-word context window, and regularization
    /// dialed down so a correct implementation can overfit quickly.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            cw: 1,
            len_max: 8,
            embed_dim: 16,
            conv_maps: 8,
            conv_widths: vec![4, 5],
            gru_hidden: 24,
            dense1: 32,
            dense2: 48,
            decoder_hidden: 24,
            noise_sigma: 0.0,
            dropout: 0.0,
            head_dropout: 0.0,
            attention: AttentionKind::Luong,
            pooling: PoolingPreset::MaxAvg,
            beam_width: 4,
            beam_length_norm: false,
            tie_conv_slots: false,
        }
    }

    /// Width of every pooled feature map; the widths from all filter
    /// sizes must agree for the per-word vector to be well formed.
    pub fn pooled_width(&self) -> Result<usize> {
        let mut widths = self.conv_widths.iter().map(|w| {
            if self.len_max >= *w {
                Some((self.len_max - w + 1) / 2)
            } else {
                None
            }
        });
        let first = widths
            .next()
            .flatten()
            .ok_or_else(|| Error::invalid("len_max shorter than a filter width"))?;
        for w in widths {
            match w {
                Some(w) if w == first => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "pooled widths differ across filter widths {:?} at len_max {}; \
                         pick an even len_max for widths 4/5",
                        self.conv_widths, self.len_max
                    )))
                }
            }
        }
        if first == 0 {
            return Err(Error::invalid(
                "pooled width is 0; increase len_max or shrink filter widths",
            ));
        }
        Ok(first)
    }

    /// Length of the per-word vector fed to the sequence layer.
    pub fn z_len(&self) -> Result<usize> {
        Ok(self.pooled_width()?
            * self.conv_maps
            * self.conv_widths.len()
            * self.pooling.blocks_per_width())
    }

    pub fn n_slots(&self) -> usize {
        2 * self.cw + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.attention != AttentionKind::Luong {
            return Err(Error::invalid(
                "only luong attention is implemented; bahdanau/monotonic are reserved names",
            ));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("conv_maps", self.conv_maps),
            ("gru_hidden", self.gru_hidden),
            ("dense1", self.dense1),
            ("dense2", self.dense2),
            ("decoder_hidden", self.decoder_hidden),
            ("beam_width", self.beam_width),
            ("len_max", self.len_max),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.conv_widths.is_empty() {
            return Err(Error::invalid("at least one filter width required"));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::invalid("dropout rates must be in [0, 1)"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        self.pooled_width()?;
        Ok(())
    }
}

/// Stable id of a parameter in the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered parameter storage. Names are hierarchical
/// (`embed.*`, `tag.*`, `lemma.*`), which is what freezing groups key on.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate param {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GruCellIds {
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_cand: ParamId,
    pub u_cand: ParamId,
    pub b_cand: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct TagParts {
    /// `[slot][width] -> (weights, bias)`.
    pub convs: Vec<Vec<(ParamId, ParamId)>>,
    pub bigru_fwd: GruCellIds,
    pub bigru_bwd: GruCellIds,
    pub heads: Vec<HeadIds>,
}

#[derive(Debug, Clone)]
pub(crate) struct LemmaParts {
    pub enc_fwd: GruCellIds,
    pub enc_bwd: GruCellIds,
    pub dec: GruCellIds,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub attn_w: ParamId,
    /// log of the positive scale on the attention energy
    pub attn_scale_log: ParamId,
    pub combine_w: ParamId,
    pub combine_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// A complete analyzer: parameters plus everything needed to interpret
/// them (vocabulary, tag domains, per-tag feature masks, hyperparameters).
pub struct Model {
    pub config: ModelConfig,
    pub vocab: CharVocab,
    pub domains: TagDomains,
    pub masks: [FeatureMask; 6],
    pub(crate) params: ParamStore,
    pub(crate) embedding: ParamId,
    pub(crate) tag: TagParts,
    pub(crate) lemma: LemmaParts,
}

fn gru_cell_ids(
    params: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut ChaCha8Rng,
) -> GruCellIds {
    let std_in = 1.0 / (input as f64).sqrt();
    let std_h = 1.0 / (hidden as f64).sqrt();
    let mut mat = |name: &str, rows: usize, cols: usize, std: f64| {
        params.add(format!("{prefix}.{name}"), Tensor::randn(&[rows, cols], std, rng))
    };
    let w_update = mat("w_update", hidden, input, std_in);
    let u_update = mat("u_update", hidden, hidden, std_h);
    let w_reset = mat("w_reset", hidden, input, std_in);
    let u_reset = mat("u_reset", hidden, hidden, std_h);
    let w_cand = mat("w_cand", hidden, input, std_in);
    let u_cand = mat("u_cand", hidden, hidden, std_h);
    let b_update = params.add(format!("{prefix}.b_update"), Tensor::zeros(&[hidden]));
    let b_reset = params.add(format!("{prefix}.b_reset"), Tensor::zeros(&[hidden]));
    let b_cand = params.add(format!("{prefix}.b_cand"), Tensor::zeros(&[hidden]));
    GruCellIds {
        w_update,
        u_update,
        b_update,
        w_reset,
        u_reset,
        b_reset,
        w_cand,
        u_cand,
        b_cand,
    }
}

impl Model {
    /// Build a freshly initialized model. Initialization is deterministic
    /// for a given seed.
    pub fn new(
        config: ModelConfig,
        vocab: CharVocab,
        domains: TagDomains,
        masks: [FeatureMask; 6],
        seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        let pool = FeaturePool::standard();
        for m in &masks {
            if m.len() != pool.len() {
                return Err(Error::Shape {
                    op: "feature mask",
                    lhs: vec![m.len()],
                    rhs: vec![pool.len()],
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();

        let d = config.embed_dim;
        let embedding = params.add(
            "embed.table",
            Tensor::randn(&[vocab.size(), d], 1.0 / (d as f64).sqrt(), &mut rng),
        );

        // Per-slot conv layers; with tied slots only slot 0's weights exist.
        let n_conv_slots = if config.tie_conv_slots { 1 } else { config.n_slots() };
        let mut convs = Vec::with_capacity(n_conv_slots);
        for slot in 0..n_conv_slots {
            let mut per_width = Vec::new();
            for &w in &config.conv_widths {
                let fan_in = (d * w) as f64;
                let weights = params.add(
                    format!("tag.conv.s{slot}.w{w}.weights"),
                    Tensor::randn(&[config.conv_maps, d * w], 1.0 / fan_in.sqrt(), &mut rng),
                );
                let bias = params.add(
                    format!("tag.conv.s{slot}.w{w}.bias"),
                    Tensor::zeros(&[config.conv_maps]),
                );
                per_width.push((weights, bias));
            }
            convs.push(per_width);
        }

        let z_len = config.z_len()?;
        let bigru_fwd = gru_cell_ids(&mut params, "tag.bigru.fwd", z_len, config.gru_hidden, &mut rng);
        let bigru_bwd = gru_cell_ids(&mut params, "tag.bigru.bwd", z_len, config.gru_hidden, &mut rng);

        let shared_dim = 2 * config.gru_hidden;
        let mut heads = Vec::with_capacity(6);
        for tag in Tag::ALL {
            let n_classes = domains.get(tag).n_labels();
            if n_classes < 2 {
                return Err(Error::invalid(format!(
                    "{} domain has {n_classes} classes; heads need at least 2",
                    tag.name()
                )));
            }
            let in_dim = shared_dim + masks[tag.index()].count_ones();
            let p = format!("tag.head.{}", tag.name());
            let w1 = params.add(
                format!("{p}.w1"),
                Tensor::randn(&[config.dense1, in_dim], 1.0 / (in_dim as f64).sqrt(), &mut rng),
            );
            let b1 = params.add(format!("{p}.b1"), Tensor::zeros(&[config.dense1]));
            let w2 = params.add(
                format!("{p}.w2"),
                Tensor::randn(
                    &[config.dense2, config.dense1],
                    1.0 / (config.dense1 as f64).sqrt(),
                    &mut rng,
                ),
            );
            let b2 = params.add(format!("{p}.b2"), Tensor::zeros(&[config.dense2]));
            let w3 = params.add(
                format!("{p}.w3"),
                Tensor::randn(
                    &[n_classes, config.dense2],
                    1.0 / (config.dense2 as f64).sqrt(),
                    &mut rng,
                ),
            );
            let b3 = params.add(format!("{p}.b3"), Tensor::zeros(&[n_classes]));
            heads.push(HeadIds {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
            });
        }

        let enc_hidden = config.gru_hidden;
        let dec_hidden = config.decoder_hidden;
        let enc_fwd = gru_cell_ids(&mut params, "lemma.enc.fwd", d, enc_hidden, &mut rng);
        let enc_bwd = gru_cell_ids(&mut params, "lemma.enc.bwd", d, enc_hidden, &mut rng);
        let dec = gru_cell_ids(&mut params, "lemma.dec", d, dec_hidden, &mut rng);
        let enc2 = 2 * enc_hidden;
        let init_w = params.add(
            "lemma.init.w",
            Tensor::randn(&[dec_hidden, enc2], 1.0 / (enc2 as f64).sqrt(), &mut rng),
        );
        let init_b = params.add("lemma.init.b", Tensor::zeros(&[dec_hidden]));
        let attn_w = params.add(
            "lemma.attn.w",
            Tensor::randn(&[dec_hidden, enc2], 1.0 / (enc2 as f64).sqrt(), &mut rng),
        );
        let attn_scale_log = params.add("lemma.attn.scale_log", Tensor::scalar(0.0));
        let comb_in = enc2 + dec_hidden;
        let combine_w = params.add(
            "lemma.combine.w",
            Tensor::randn(&[dec_hidden, comb_in], 1.0 / (comb_in as f64).sqrt(), &mut rng),
        );
        let combine_b = params.add("lemma.combine.b", Tensor::zeros(&[dec_hidden]));
        let out_classes = lemma_classes(&vocab);
        let out_w = params.add(
            "lemma.out.w",
            Tensor::randn(
                &[out_classes, dec_hidden],
                1.0 / (dec_hidden as f64).sqrt(),
                &mut rng,
            ),
        );
        let out_b = params.add("lemma.out.b", Tensor::zeros(&[out_classes]));

        Ok(Model {
            config,
            vocab,
            domains,
            masks,
            params,
            embedding,
            tag: TagParts {
                convs,
                bigru_fwd,
                bigru_bwd,
                heads,
            },
            lemma: LemmaParts {
                enc_fwd,
                enc_bwd,
                dec,
                init_w,
                init_b,
                attn_w,
                attn_scale_log,
                combine_w,
                combine_b,
                out_w,
                out_b,
            },
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Register every parameter on a tape. Parameters whose name fails the
    /// `trainable` predicate become constants: no gradient ever reaches
    /// them, which is what freezing means here.
    pub fn register_params(
        &self,
        tape: &mut Tape,
        trainable: impl Fn(&str) -> bool,
    ) -> Vec<Var> {
        self.params
            .iter()
            .map(|(name, tensor)| {
                if trainable(name) {
                    tape.leaf(tensor.clone())
                } else {
                    tape.constant(tensor.clone())
                }
            })
            .collect()
    }

    /// Conv parameter ids for a slot, honoring slot tying.
    pub(crate) fn conv_ids(&self, slot: usize) -> &[(ParamId, ParamId)] {
        if self.config.tie_conv_slots {
            &self.tag.convs[0]
        } else {
            &self.tag.convs[slot]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TagDomain, TagDomains};

    pub(crate) fn tiny_domains() -> TagDomains {
        TagDomains::new([
            TagDomain::from_labels(Tag::Pos, ["n", "v", "adj"].map(String::from)),
            TagDomain::from_labels(Tag::Gender, ["m", "f"].map(String::from)),
            TagDomain::from_labels(Tag::Number, ["sg", "pl"].map(String::from)),
            TagDomain::from_labels(Tag::Person, ["1", "2", "3"].map(String::from)),
            TagDomain::from_labels(Tag::Case, ["d", "o"].map(String::from)),
            TagDomain::from_labels(Tag::Tam, ["ta", "ga"].map(String::from)),
        ])
    }

    #[test]
    fn pooled_widths_reference_config() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.pooled_width().unwrap(), 7);
        assert_eq!(cfg.z_len().unwrap(), 28 * 64);
        assert_eq!(cfg.n_slots(), 9);
    }

    #[test]
    fn odd_len_max_is_rejected_for_mixed_widths() {
        let cfg = ModelConfig {
            len_max: 7,
            ..ModelConfig::toy()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_luong_attention_is_a_build_error() {
        let cfg = ModelConfig {
            attention: AttentionKind::Bahdanau,
            ..ModelConfig::toy()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn model_builds_deterministically() {
        let pool = FeaturePool::standard();
        let vocab = CharVocab::from_chars("abdegikmnoprstu".chars());
        let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
        let m1 = Model::new(ModelConfig::toy(), vocab.clone(), tiny_domains(), masks, 7).unwrap();
        let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
        let m2 = Model::new(ModelConfig::toy(), vocab, tiny_domains(), masks, 7).unwrap();
        assert_eq!(m1.params.len(), m2.params.len());
        for (a, b) in m1.params.iter().zip(m2.params.iter()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn param_groups_cover_tag_embed_lemma() {
        let pool = FeaturePool::standard();
        let vocab = CharVocab::from_chars("abc".chars());
        let masks = std::array::from_fn(|_| FeatureMask::all_zeros(pool.len()));
        let m = Model::new(ModelConfig::toy(), vocab, tiny_domains(), masks, 0).unwrap();
        let mut groups = std::collections::BTreeSet::new();
        for (name, _) in m.params.iter() {
            groups.insert(name.split('.').next().unwrap().to_string());
        }
        assert_eq!(
            groups.into_iter().collect::<Vec<_>>(),
            vec!["embed", "lemma", "tag"]
        );
    }
}
