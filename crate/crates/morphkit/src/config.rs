//! Plain `key = value` run configuration with `[section]` headers.
//! Defaults come from the reference architecture; file values override
//! defaults and command-line flags override the file.

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::layers::LossWeights;
use crate::model::{AttentionKind, ModelConfig, PoolingPreset};
use crate::select::{FitnessConfig, FitnessMetric, GaConfig, RfConfig};
use crate::train::TrainConfig;
use std::path::Path;

/// Merged view of corpus, model, training, loss, and selection settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub truncate_long: bool,
    pub fit_lenmax: bool,
    pub split_ratios: (f64, f64, f64),
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub ga: GaConfig,
    pub rf: RfConfig,
    pub fitness: FitnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            truncate_long: false,
            fit_lenmax: false,
            split_ratios: (0.8, 0.1, 0.1),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossWeights::calibrated(),
            ga: GaConfig::default(),
            rf: RfConfig::default(),
            fitness: FitnessConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("expected a boolean, got {v:?}"))),
    }
}

fn parse_f64(v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("expected a number, got {v:?}")))
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("expected an integer, got {v:?}")))
}

fn parse_u64(v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::Config(format!("expected an integer, got {v:?}")))
}

impl RunConfig {
    /// Apply one `section.key = value` assignment.
    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match (section, key) {
            ("corpus", "cw") => self.model.cw = parse_usize(v)?,
            ("corpus", "len_max") => self.model.len_max = parse_usize(v)?,
            ("corpus", "truncate_long") => self.truncate_long = parse_bool(v)?,
            ("corpus", "fit_lenmax") => self.fit_lenmax = parse_bool(v)?,
            ("corpus", "split_train") => self.split_ratios.0 = parse_f64(v)?,
            ("corpus", "split_dev") => self.split_ratios.1 = parse_f64(v)?,
            ("corpus", "split_test") => self.split_ratios.2 = parse_f64(v)?,

            ("model", "embed_dim") => self.model.embed_dim = parse_usize(v)?,
            ("model", "conv_maps") => self.model.conv_maps = parse_usize(v)?,
            ("model", "conv_widths") => {
                self.model.conv_widths = v
                    .split(',')
                    .map(|s| parse_usize(s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            ("model", "gru_hidden") => self.model.gru_hidden = parse_usize(v)?,
            ("model", "dense1") => self.model.dense1 = parse_usize(v)?,
            ("model", "dense2") => self.model.dense2 = parse_usize(v)?,
            ("model", "decoder_hidden") => self.model.decoder_hidden = parse_usize(v)?,
            ("model", "noise_sigma") => self.model.noise_sigma = parse_f64(v)?,
            ("model", "dropout") => self.model.dropout = parse_f64(v)?,
            ("model", "head_dropout") => self.model.head_dropout = parse_f64(v)?,
            ("model", "beam_width") => self.model.beam_width = parse_usize(v)?,
            ("model", "beam_length_norm") => self.model.beam_length_norm = parse_bool(v)?,
            ("model", "tie_conv_slots") => self.model.tie_conv_slots = parse_bool(v)?,
            ("model", "attention") => self.model.attention = AttentionKind::from_name(v)?,
            ("model", "pooling") => self.model.pooling = PoolingPreset::from_name(v)?,

            ("train", "optimizer") => {
                if v != "adadelta" {
                    return Err(Error::Config(format!(
                        "optimizer {v:?} is not available; only adadelta is implemented"
                    )));
                }
            }
            ("train", "lr") => self.train.lr = parse_f64(v)?,
            ("train", "rho") => self.train.rho = parse_f64(v)?,
            ("train", "epsilon") => self.train.epsilon = parse_f64(v)?,
            ("train", "batch_size") => self.train.batch_size = parse_usize(v)?,
            ("train", "max_epochs") => self.train.max_epochs = parse_usize(v)?,
            ("train", "patience") => self.train.patience = parse_usize(v)?,
            ("train", "min_delta") => self.train.min_delta = parse_f64(v)?,
            ("train", "grad_clip") => self.train.grad_clip = parse_f64(v)?,
            ("train", "freeze") => self.train.freeze = parse_bool(v)?,
            ("train", "target_train_loss") => self.train.target_train_loss = parse_f64(v)?,
            ("train", "seed") => self.train.seed = parse_u64(v)?,

            ("loss", "lambda") => {
                let l = parse_f64(v)?;
                for tag in Tag::ALL {
                    self.loss.set_tag(tag, l);
                }
            }
            ("loss", "lambda_l") => self.loss.lemma = parse_f64(v)?,
            ("loss", "lambda_pos") => self.loss.pos = parse_f64(v)?,
            ("loss", "lambda_g") => self.loss.gender = parse_f64(v)?,
            ("loss", "lambda_n") => self.loss.number = parse_f64(v)?,
            ("loss", "lambda_p") => self.loss.person = parse_f64(v)?,
            ("loss", "lambda_c") => self.loss.case = parse_f64(v)?,
            ("loss", "lambda_tam") => self.loss.tam = parse_f64(v)?,

            ("ga", "generations") => self.ga.generations = parse_usize(v)?,
            ("ga", "population") => self.ga.population = parse_usize(v)?,
            ("ga", "crossover") => self.ga.crossover_prob = parse_f64(v)?,
            ("ga", "mutation") => self.ga.mutation_prob = parse_f64(v)?,
            ("ga", "seed") => self.ga.seed = parse_u64(v)?,
            ("ga", "alpha") => self.fitness.alpha = parse_f64(v)?,
            ("ga", "folds") => self.fitness.folds = parse_usize(v)?,
            ("ga", "metric") => {
                self.fitness.metric = match v {
                    "micro_f1" | "microf1" => FitnessMetric::MicroF1,
                    "accuracy" => FitnessMetric::Accuracy,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown fitness metric {v:?} (micro_f1 | accuracy)"
                        )))
                    }
                };
            }

            ("rf", "trees") => self.rf.trees = parse_usize(v)?,
            ("rf", "min_samples_split") => self.rf.min_samples_split = parse_usize(v)?,
            ("rf", "min_samples_leaf") => self.rf.min_samples_leaf = parse_usize(v)?,

            _ => {
                return Err(Error::Config(format!(
                    "unknown config key [{section}] {key}"
                )))
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    /// Merge assignments from config-file text into this config.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: malformed section header", ln + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    ln + 1
                )));
            };
            self.apply(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", ln + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.ga.validate()?;
        Ok(())
    }
}
