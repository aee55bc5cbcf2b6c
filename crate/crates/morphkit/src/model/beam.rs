//! Breadth-limited best-first decoding over any stepwise sequence model.

use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::{lemma_start, lemma_stop};
use crate::error::{Error, Result};
use crate::model::Model;

/// A stepwise decoder the beam can drive. Implementations must be
/// deterministic: the same state and symbol always give the same
/// distribution.
pub trait SeqDecoder {
    type State: Clone;

    /// State before any symbol is consumed.
    fn start(&mut self) -> Result<Self::State>;

    /// Feed the previous output symbol, returning the next state and the
    /// log-probabilities of every candidate symbol.
    fn step(&mut self, state: &Self::State, prev_symbol: usize) -> Result<(Self::State, Vec<f64>)>;
}

/// One partial decode: emitted symbols, accumulated log-probability, the
/// decoder state to expand from, and whether the stop symbol was emitted.
#[derive(Debug, Clone)]
pub struct BeamHypothesis<S> {
    pub symbols: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    pub finished: bool,
}

impl<S> BeamHypothesis<S> {
    fn score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.symbols.is_empty() {
            self.log_prob / self.symbols.len() as f64
        } else {
            self.log_prob
        }
    }
}

/// Length-capped beam search.
///
/// Hypotheses that emit `stop_symbol` freeze and keep competing on score;
/// the result is the best finished hypothesis, or the best unfinished one
/// if nothing finished within `max_len` steps. Scores are sums of
/// per-step log-probabilities (optionally length-normalized). The emitted
/// stop symbol is not part of the returned sequence. With `width = 1`
/// this is greedy decoding.
pub fn beam_decode<D: SeqDecoder>(
    decoder: &mut D,
    start_symbol: usize,
    stop_symbol: Option<usize>,
    width: usize,
    max_len: usize,
    length_norm: bool,
) -> Result<Vec<usize>> {
    if width < 1 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    if max_len < 1 {
        return Err(Error::invalid("beam max_len must be at least 1"));
    }
    let start = decoder.start()?;
    let mut beam = vec![BeamHypothesis {
        symbols: Vec::new(),
        log_prob: 0.0,
        state: start,
        finished: false,
    }];

    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates: Vec<BeamHypothesis<D::State>> = Vec::new();
        for hyp in &beam {
            if hyp.finished {
                candidates.push(hyp.clone());
                continue;
            }
            let prev = hyp.symbols.last().copied().unwrap_or(start_symbol);
            let (state, log_probs) = decoder.step(&hyp.state, prev)?;
            for (sym, &lp) in log_probs.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut symbols = hyp.symbols.clone();
                symbols.push(sym);
                candidates.push(BeamHypothesis {
                    symbols,
                    log_prob: hyp.log_prob + lp,
                    state: state.clone(),
                    finished: stop_symbol == Some(sym),
                });
            }
        }
        // Deterministic ranking: score descending, then symbols ascending.
        candidates.sort_by(|a, b| {
            b.score(length_norm)
                .partial_cmp(&a.score(length_norm))
                .expect("finite scores")
                .then_with(|| a.symbols.cmp(&b.symbols))
        });
        candidates.truncate(width);
        beam = candidates;
    }

    let best = beam
        .iter()
        .filter(|h| h.finished)
        .max_by(|a, b| {
            a.score(length_norm)
                .partial_cmp(&b.score(length_norm))
                .expect("finite scores")
                .then_with(|| b.symbols.cmp(&a.symbols))
        })
        .or_else(|| {
            beam.iter().max_by(|a, b| {
                a.score(length_norm)
                    .partial_cmp(&b.score(length_norm))
                    .expect("finite scores")
                    .then_with(|| b.symbols.cmp(&a.symbols))
            })
        })
        .ok_or_else(|| Error::invalid("beam search produced no hypotheses"))?;

    let mut symbols = best.symbols.clone();
    if best.finished {
        symbols.pop();
    }
    Ok(symbols)
}

/// A decoder defined by an explicit `[step][prev_symbol] -> distribution`
/// table. Exists for tests and reference checks: small instances can be
/// enumerated exhaustively.
pub struct TableDecoder {
    /// `log_probs[step][prev_symbol][symbol]`
    pub log_probs: Vec<Vec<Vec<f64>>>,
}

impl SeqDecoder for TableDecoder {
    type State = usize; // the step index

    fn start(&mut self) -> Result<usize> {
        Ok(0)
    }

    fn step(&mut self, state: &usize, prev_symbol: usize) -> Result<(usize, Vec<f64>)> {
        let table = self
            .log_probs
            .get(*state)
            .ok_or_else(|| Error::invalid("table decoder stepped past its table"))?;
        let row = table
            .get(prev_symbol)
            .ok_or_else(|| Error::invalid("table decoder: prev symbol out of range"))?;
        Ok((state + 1, row.clone()))
    }
}

impl TableDecoder {
    /// Total log-probability of a full sequence under the table.
    pub fn sequence_log_prob(&self, start_symbol: usize, symbols: &[usize]) -> f64 {
        let mut lp = 0.0;
        let mut prev = start_symbol;
        for (step, &s) in symbols.iter().enumerate() {
            lp += self.log_probs[step][prev][s];
            prev = s;
        }
        lp
    }

    /// Argmax sequence by exhaustive enumeration.
    pub fn exhaustive_best(&self, start_symbol: usize, n_symbols: usize, len: usize) -> Vec<usize> {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let total = (n_symbols as u64).pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let mut seq = Vec::with_capacity(len);
            for _ in 0..len {
                seq.push((c % n_symbols as u64) as usize);
                c /= n_symbols as u64;
            }
            let lp = self.sequence_log_prob(start_symbol, &seq);
            let better = match &best {
                None => true,
                Some((blp, bseq)) => lp > *blp || (lp == *blp && seq < *bseq),
            };
            if better {
                best = Some((lp, seq));
            }
        }
        best.expect("at least one sequence").1
    }
}

/// Inference-time lemma decoder over a trained model. Encoder states are
/// computed once per word; each step runs on a scratch tape with the
/// parameters as constants, so decoding never perturbs the model.
pub struct LemmaDecoder<'m> {
    model: &'m Model,
    enc_values: Vec<Tensor>,
    h0: Tensor,
}

impl<'m> LemmaDecoder<'m> {
    pub fn new(model: &'m Model, word_ids: &[usize]) -> Result<LemmaDecoder<'m>> {
        let mut tape = Tape::new();
        let vars = model.register_params(&mut tape, |_| false);
        let (states, h0) = model.encode_word(&mut tape, &vars, word_ids)?;
        let enc_values = states.iter().map(|&s| tape.value(s).clone()).collect();
        let h0 = tape.value(h0).clone();
        Ok(LemmaDecoder {
            model,
            enc_values,
            h0,
        })
    }
}

impl SeqDecoder for LemmaDecoder<'_> {
    type State = Tensor;

    fn start(&mut self) -> Result<Tensor> {
        Ok(self.h0.clone())
    }

    fn step(&mut self, state: &Tensor, prev_symbol: usize) -> Result<(Tensor, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = self.model.register_params(&mut tape, |_| false);
        let enc_states: Vec<Var> = self
            .enc_values
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        let h_prev = tape.constant(state.clone());
        let (h_next, probs) =
            self.model
                .decode_step(&mut tape, &vars, &enc_states, h_prev, prev_symbol)?;
        let log_probs = tape
            .value(probs)
            .data()
            .iter()
            .map(|&p| p.max(crate::layers::LOG_EPS).ln())
            .collect();
        Ok((tape.value(h_next).clone(), log_probs))
    }
}

impl Model {
    /// Beam-decode the lemma for one encoded word, returning character ids.
    pub fn beam_decode_lemma(&self, word_ids: &[usize], width: usize) -> Result<Vec<usize>> {
        let mut decoder = LemmaDecoder::new(self, word_ids)?;
        let max_len = self.config.len_max + 2;
        beam_decode(
            &mut decoder,
            lemma_start(&self.vocab),
            Some(lemma_stop(&self.vocab)),
            width,
            max_len,
            self.config.beam_length_norm,
        )
    }

    /// Decode and render the lemma as a string. Ids outside the character
    /// range (the start symbol never appears; rogue pad/unk map to empty)
    /// are dropped.
    pub fn decode_lemma_string(&self, word_ids: &[usize], width: usize) -> Result<String> {
        let ids = self.beam_decode_lemma(word_ids, width)?;
        Ok(ids.iter().filter_map(|&id| self.vocab.decode(id)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random 3-step/3-symbol Markov table; prev index 3 is the start.
    fn random_table(rng: &mut ChaCha8Rng) -> TableDecoder {
        let log_probs = (0..3)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() + 1e-3).collect();
                        let z: f64 = raw.iter().sum();
                        raw.into_iter().map(|p| (p / z).ln()).collect()
                    })
                    .collect()
            })
            .collect();
        TableDecoder { log_probs }
    }

    #[test]
    fn saturated_beam_equals_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..25 {
            let mut dec = random_table(&mut rng);
            let want = dec.exhaustive_best(3, 3, 3);
            let got = beam_decode(&mut dec, 3, None, 27, 3, false).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..25 {
            let mut dec = random_table(&mut rng);
            // hand-rolled greedy walk
            let mut prev = 3usize;
            let mut state = 0usize;
            let mut greedy = Vec::new();
            for _ in 0..3 {
                let (next, lps) = dec.step(&state, prev).unwrap();
                let mut best = 0;
                for s in 1..lps.len() {
                    if lps[s] > lps[best] {
                        best = s;
                    }
                }
                greedy.push(best);
                prev = best;
                state = next;
            }
            let got = beam_decode(&mut dec, 3, None, 1, 3, false).unwrap();
            assert_eq!(got, greedy);
        }
    }

    #[test]
    fn wider_beams_never_score_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..10 {
            let mut dec = random_table(&mut rng);
            let mut prev_score = f64::NEG_INFINITY;
            for width in [1usize, 2, 4, 9, 27] {
                let seq = beam_decode(&mut dec, 3, None, width, 3, false).unwrap();
                let score = dec.sequence_log_prob(3, &seq);
                assert!(
                    score >= prev_score - 1e-12,
                    "width {width} scored {score} < {prev_score}"
                );
                prev_score = score;
            }
        }
    }

    #[test]
    fn stop_symbol_freezes_hypotheses() {
        // Symbol 2 is the stop. Step 0 prefers stop outright; a finished
        // hypothesis must survive and win.
        let lp = |v: &[f64]| v.iter().map(|p| p.ln()).collect::<Vec<_>>();
        let mut dec = TableDecoder {
            log_probs: vec![
                vec![lp(&[0.2, 0.1, 0.7]); 4],
                vec![lp(&[0.5, 0.4, 0.1]); 4],
                vec![lp(&[0.5, 0.4, 0.1]); 4],
            ],
        };
        let got = beam_decode(&mut dec, 3, Some(2), 4, 3, false).unwrap();
        assert_eq!(got, Vec::<usize>::new(), "immediate stop wins, stop stripped");
    }
}
