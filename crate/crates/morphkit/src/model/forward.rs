//! Taped forward passes for the tag predictor and the teacher-forced
//! lemma predictor.

use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::{lemma_stop, EncodedExample, Tag};
use crate::error::{Error, Result};
use crate::layers::{
    bigru, build_context_seq, conv_forward, dense_head, dropout, embed, gaussian_noise,
    gru_step, luong_attention, pool, BiGruOutput, ConvLayerVars, DenseHeadVars, GruCellVars,
    PoolMode,
};
use crate::lingfeat::{apply_mask, FeatureVector};
use crate::model::{GruCellIds, Model, PoolingPreset};
use rand::Rng;

impl Model {
    pub(crate) fn gru_vars(&self, vars: &[Var], ids: &GruCellIds) -> GruCellVars {
        GruCellVars {
            w_update: vars[ids.w_update.0],
            u_update: vars[ids.u_update.0],
            b_update: vars[ids.b_update.0],
            w_reset: vars[ids.w_reset.0],
            u_reset: vars[ids.u_reset.0],
            b_reset: vars[ids.b_reset.0],
            w_cand: vars[ids.w_cand.0],
            u_cand: vars[ids.u_cand.0],
            b_cand: vars[ids.b_cand.0],
        }
    }

    /// Per-word feature vector: embed, regularize, convolve at every
    /// filter width, pool, concatenate.
    fn word_z<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        slot: usize,
        ids: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let table = vars[self.embedding.0];
        let e = embed(tape, table, ids)?;
        let e = dropout(tape, e, self.config.dropout, training, rng)?;
        let e = gaussian_noise(tape, e, self.config.noise_sigma, training, rng)?;
        let chars = tape.transpose(e)?;

        let mut blocks = Vec::new();
        for (wi, &width) in self.config.conv_widths.iter().enumerate() {
            let (w_id, b_id) = self.conv_ids(slot)[wi];
            let layer = ConvLayerVars {
                weights: vars[w_id.0],
                bias: vars[b_id.0],
                width,
            };
            let fmap = conv_forward(tape, chars, &layer)?;
            match self.config.pooling {
                PoolingPreset::MaxAvg => {
                    blocks.push(pool(tape, fmap, PoolMode::Max)?);
                    blocks.push(pool(tape, fmap, PoolMode::Avg)?);
                }
                PoolingPreset::MaxOnly => blocks.push(pool(tape, fmap, PoolMode::Max)?),
                PoolingPreset::AvgOnly => blocks.push(pool(tape, fmap, PoolMode::Avg)?),
            }
        }
        // Channelwise concat of the pooled blocks, flattened position-major.
        let mut transposed = Vec::with_capacity(blocks.len());
        for b in blocks {
            transposed.push(tape.transpose(b)?);
        }
        let stacked = tape.concat(&transposed, 1)?;
        let total = tape.value(stacked).len();
        tape.reshape(stacked, vec![total])
    }

    /// Tag-predictor forward pass: six probability vectors, one per tag
    /// domain, ordered POS, G, N, P, C, TAM.
    pub fn tag_forward<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        example: &EncodedExample,
        features: &FeatureVector,
        training: bool,
        rng: &mut R,
    ) -> Result<[Var; 6]> {
        let cw = self.config.cw;
        if example.context_ids.len() != 2 * cw {
            return Err(Error::Shape {
                op: "tag_forward context",
                lhs: vec![example.context_ids.len()],
                rhs: vec![2 * cw],
            });
        }
        if example.word_ids.len() != self.config.len_max {
            return Err(Error::Shape {
                op: "tag_forward word",
                lhs: vec![example.word_ids.len()],
                rhs: vec![self.config.len_max],
            });
        }

        // Slot order: left context (leftmost first), word, right context.
        let mut slot_ids: Vec<&[usize]> = Vec::with_capacity(self.config.n_slots());
        for left in &example.context_ids[..cw] {
            slot_ids.push(left);
        }
        slot_ids.push(&example.word_ids);
        for right in &example.context_ids[cw..] {
            slot_ids.push(right);
        }

        let mut zs = Vec::with_capacity(slot_ids.len());
        for (slot, ids) in slot_ids.iter().enumerate() {
            zs.push(self.word_z(tape, vars, slot, ids, training, rng)?);
        }
        let seq = build_context_seq(tape, zs, cw)?;

        let fwd = self.gru_vars(vars, &self.tag.bigru_fwd);
        let bwd = self.gru_vars(vars, &self.tag.bigru_bwd);
        let shared = bigru(tape, &fwd, &bwd, &seq, BiGruOutput::Last)?[0];

        let mut out = Vec::with_capacity(6);
        for tag in Tag::ALL {
            let masked = apply_mask(features, &self.masks[tag.index()])?;
            let feats = tape.constant(Tensor::vector(masked.0));
            let ids = &self.tag.heads[tag.index()];
            let head = DenseHeadVars {
                w1: vars[ids.w1.0],
                b1: vars[ids.b1.0],
                w2: vars[ids.w2.0],
                b2: vars[ids.b2.0],
                w3: vars[ids.w3.0],
                b3: vars[ids.b3.0],
            };
            out.push(dense_head(
                tape,
                shared,
                feats,
                &head,
                self.config.head_dropout,
                training,
                rng,
            )?);
        }
        Ok(out.try_into().expect("six heads"))
    }

    /// Run the lemma encoder over a word's characters (pads stripped).
    /// Returns per-character states and the decoder's initial state.
    pub(crate) fn encode_word(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        word_ids: &[usize],
    ) -> Result<(Vec<Var>, Var)> {
        let chars: Vec<usize> = word_ids
            .iter()
            .copied()
            .take_while(|&id| id != self.vocab.pad_id())
            .collect();
        if chars.is_empty() {
            return Err(Error::invalid("lemma encoder: empty word"));
        }
        let table = vars[self.embedding.0];
        let e = embed(tape, table, &chars)?;
        let mut xs = Vec::with_capacity(chars.len());
        for i in 0..chars.len() {
            let row = tape.slice(e, 0, i, 1)?;
            let d = tape.value(row).len();
            xs.push(tape.reshape(row, vec![d])?);
        }
        let fwd = self.gru_vars(vars, &self.lemma.enc_fwd);
        let bwd = self.gru_vars(vars, &self.lemma.enc_bwd);
        let states = bigru(tape, &fwd, &bwd, &xs, BiGruOutput::PerStep)?;

        // Decoder initial state: learned projection of the concatenated
        // final forward and final backward encoder states. The final
        // forward state is the first half of the last per-step concat; the
        // final backward state is the second half of the first.
        let h = self.config.gru_hidden;
        let last = *states.last().expect("non-empty");
        let final_fwd = tape.slice(last, 0, 0, h)?;
        let final_bwd = tape.slice(states[0], 0, h, h)?;
        let summary = tape.concat(&[final_fwd, final_bwd], 0)?;
        let proj = tape.matmul(vars[self.lemma.init_w.0], summary)?;
        let h0 = tape.add(proj, vars[self.lemma.init_b.0])?;
        Ok((states, h0))
    }

    /// One decoder step: embed the previous output symbol, advance the
    /// GRU, attend over encoder states, and emit a distribution over the
    /// output alphabet (characters plus the start/stop symbols).
    pub(crate) fn decode_step(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        enc_states: &[Var],
        h_prev: Var,
        prev_symbol: usize,
    ) -> Result<(Var, Var)> {
        let table = vars[self.embedding.0];
        // Start (and any out-of-alphabet symbol) shares the padding row so
        // the embedding table keeps exactly vocabulary-size rows.
        let embed_id = if prev_symbol < self.vocab.size() {
            prev_symbol
        } else {
            self.vocab.pad_id()
        };
        let e = embed(tape, table, &[embed_id])?;
        let d = self.config.embed_dim;
        let x = tape.reshape(e, vec![d])?;
        let cell = self.gru_vars(vars, &self.lemma.dec);
        let h_t = gru_step(tape, &cell, x, h_prev)?;

        let w_a = vars[self.lemma.attn_w.0];
        let scale = tape.exp(vars[self.lemma.attn_scale_log.0]);
        let (context, _weights) = luong_attention(tape, h_t, enc_states, w_a, scale)?;
        let merged = tape.concat(&[context, h_t], 0)?;
        let combined = tape.matmul(vars[self.lemma.combine_w.0], merged)?;
        let combined = tape.add(combined, vars[self.lemma.combine_b.0])?;
        let attentional = tape.tanh(combined);
        let logits = tape.matmul(vars[self.lemma.out_w.0], attentional)?;
        let logits = tape.add(logits, vars[self.lemma.out_b.0])?;
        let probs = tape.softmax(logits, 0)?;
        Ok((h_t, probs))
    }
}

/// Teacher-forced decoder outputs: one distribution per step alongside its
/// gold target symbol (characters then stop).
pub struct LemmaTeacherOutput {
    pub step_probs: Vec<Var>,
    pub targets: Vec<usize>,
}

impl Model {
    /// Teacher-forced lemma pass: the decoder consumes the gold prefix at
    /// every step and predicts the next symbol.
    pub fn lemma_forward_teacher(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        example: &EncodedExample,
    ) -> Result<LemmaTeacherOutput> {
        let (enc_states, mut h) = self.encode_word(tape, vars, &example.word_ids)?;
        let stop = lemma_stop(&self.vocab);
        let frame: Vec<usize> = {
            let mut f = Vec::new();
            for &id in &example.gold_lemma_ids {
                f.push(id);
                if id == stop {
                    break;
                }
            }
            f
        };
        if frame.len() < 2 || *frame.last().expect("non-empty") != stop {
            return Err(Error::invalid(
                "gold lemma ids must be framed with start and stop symbols",
            ));
        }
        let mut step_probs = Vec::with_capacity(frame.len() - 1);
        let mut targets = Vec::with_capacity(frame.len() - 1);
        for t in 1..frame.len() {
            let (h_next, probs) = self.decode_step(tape, vars, &enc_states, h, frame[t - 1])?;
            h = h_next;
            step_probs.push(probs);
            targets.push(frame[t]);
        }
        Ok(LemmaTeacherOutput {
            step_probs,
            targets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_sentence, CharVocab, Sentence, TagSet, Token};
    use crate::lingfeat::{extract, FeatureMask, FeaturePool, PhonoTable};
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build_model() -> Model {
        let pool = FeaturePool::standard();
        let vocab = CharVocab::from_chars("abdegikmnoprstu".chars());
        let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
        Model::new(
            ModelConfig::toy(),
            vocab,
            crate::model::tests::tiny_domains(),
            masks,
            42,
        )
        .unwrap()
    }

    fn example_for(model: &Model, words: &[&str], idx: usize) -> (EncodedExample, FeatureVector) {
        let sent = Sentence::new(
            words
                .iter()
                .map(|w| Token {
                    surface: w.to_string(),
                    lemma: w.to_string(),
                    tags: TagSet::new([1, 1, 1, 1, 1, 1]),
                })
                .collect(),
        )
        .unwrap();
        let examples = encode_sentence(
            &sent,
            &model.vocab,
            model.config.cw,
            model.config.len_max,
            false,
        )
        .unwrap();
        let pool = FeaturePool::standard();
        let prev = (idx > 0).then(|| words[idx - 1]);
        let next = words.get(idx + 1).copied();
        let features = extract(pool, words[idx], idx, prev, next, PhonoTable::bundled());
        (examples[idx].clone(), features)
    }

    #[test]
    fn tag_forward_emits_six_distributions() {
        let model = build_model();
        let (ex, feats) = example_for(&model, &["bado", "kapeta"], 0);
        let mut tape = Tape::new();
        let vars = model.register_params(&mut tape, |_| true);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model
            .tag_forward(&mut tape, &vars, &ex, &feats, false, &mut rng)
            .unwrap();
        let expected_sizes = model.domains.class_counts();
        for (tag, var) in Tag::ALL.iter().zip(out.iter()) {
            let v = tape.value(*var);
            assert_eq!(v.len(), expected_sizes[tag.index()]);
            assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(v.data().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let model = build_model();
        let (ex, feats) = example_for(&model, &["pilo", "gesu", "mago"], 1);
        let run = || {
            let mut tape = Tape::new();
            let vars = model.register_params(&mut tape, |_| true);
            let mut rng = ChaCha8Rng::seed_from_u64(1234);
            let out = model
                .tag_forward(&mut tape, &vars, &ex, &feats, false, &mut rng)
                .unwrap();
            out.iter()
                .map(|v| tape.value(*v).data().to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn teacher_forcing_emits_lemma_len_plus_stop_steps() {
        let model = build_model();
        let (ex, _) = example_for(&model, &["bado"], 0);
        let mut tape = Tape::new();
        let vars = model.register_params(&mut tape, |_| true);
        let out = model.lemma_forward_teacher(&mut tape, &vars, &ex).unwrap();
        assert_eq!(out.step_probs.len(), 5, "4 chars + stop");
        assert_eq!(out.targets.len(), 5);
        assert_eq!(*out.targets.last().unwrap(), lemma_stop(&model.vocab));
        for p in &out.step_probs {
            let v = tape.value(*p);
            assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_word_is_an_error() {
        let model = build_model();
        let mut tape = Tape::new();
        let vars = model.register_params(&mut tape, |_| true);
        let pad_only = vec![model.vocab.pad_id(); model.config.len_max];
        assert!(model.encode_word(&mut tape, &vars, &pad_only).is_err());
    }
}
