//! Fixed-shape training examples: padded char-id matrices for a word and
//! its context window, plus framed lemma targets.

use crate::corpus::{CharVocab, Sentence, TagSet};
use crate::error::{Error, Result};

/// One analysis instance.
///
/// `context_ids` holds `2*cw` entries in sentence order: the `cw` words to
/// the left (leftmost first) then the `cw` words to the right. Slots beyond
/// the sentence boundary are all-padding vectors. `gold_lemma_ids` is
/// framed `[start, chars.., stop]` and right-padded; the start and stop
/// symbols live just above the vocabulary (`vocab.size()` and
/// `vocab.size()+1`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub word_ids: Vec<usize>,
    pub context_ids: Vec<Vec<usize>>,
    pub gold_tags: TagSet,
    pub gold_lemma_ids: Vec<usize>,
    pub position: usize,
}

/// Start-symbol id in the lemma output space.
pub fn lemma_start(vocab: &CharVocab) -> usize {
    vocab.size()
}

/// Stop-symbol id in the lemma output space.
pub fn lemma_stop(vocab: &CharVocab) -> usize {
    vocab.size() + 1
}

/// Number of classes the lemma decoder predicts over.
pub fn lemma_classes(vocab: &CharVocab) -> usize {
    vocab.size() + 2
}

fn encode_or_truncate(
    vocab: &CharVocab,
    word: &str,
    len_max: usize,
    truncate: bool,
) -> Result<Vec<usize>> {
    if truncate && word.chars().count() > len_max {
        let shortened: String = word.chars().take(len_max).collect();
        vocab.encode_word(&shortened, len_max)
    } else {
        vocab.encode_word(word, len_max)
    }
}

/// Encode one sentence into per-token examples.
pub fn encode_sentence(
    sentence: &Sentence,
    vocab: &CharVocab,
    cw: usize,
    len_max: usize,
    truncate: bool,
) -> Result<Vec<EncodedExample>> {
    if len_max < 1 {
        return Err(Error::invalid("len_max must be at least 1"));
    }
    let pad_vec = vec![vocab.pad_id(); len_max];
    let encoded_words: Vec<Vec<usize>> = sentence
        .tokens
        .iter()
        .map(|t| encode_or_truncate(vocab, &t.surface, len_max, truncate))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(sentence.len());
    for (i, token) in sentence.tokens.iter().enumerate() {
        let mut context_ids = Vec::with_capacity(2 * cw);
        for off in (1..=cw).rev() {
            context_ids.push(match i.checked_sub(off) {
                Some(j) => encoded_words[j].clone(),
                None => pad_vec.clone(),
            });
        }
        for off in 1..=cw {
            context_ids.push(match encoded_words.get(i + off) {
                Some(w) => w.clone(),
                None => pad_vec.clone(),
            });
        }

        let lemma_len = token.lemma.chars().count();
        if lemma_len > len_max && !truncate {
            return Err(Error::invalid(format!(
                "lemma {:?} has {lemma_len} characters, longer than len_max {len_max}",
                token.lemma
            )));
        }
        let lemma: String = token.lemma.chars().take(len_max).collect();
        let mut gold_lemma_ids = Vec::with_capacity(len_max + 2);
        gold_lemma_ids.push(lemma_start(vocab));
        gold_lemma_ids.extend(lemma.chars().map(|c| vocab.encode(c)));
        gold_lemma_ids.push(lemma_stop(vocab));
        gold_lemma_ids.resize(len_max + 2, vocab.pad_id());

        out.push(EncodedExample {
            word_ids: encoded_words[i].clone(),
            context_ids,
            gold_tags: token.tags,
            gold_lemma_ids,
            position: i,
        });
    }
    Ok(out)
}

/// Encode every token of every sentence. Tokens longer than `len_max` are
/// rejected with an error naming the token.
pub fn encode_examples(
    sentences: &[Sentence],
    vocab: &CharVocab,
    cw: usize,
    len_max: usize,
) -> Result<Vec<EncodedExample>> {
    let mut out = Vec::new();
    for s in sentences {
        out.extend(encode_sentence(s, vocab, cw, len_max, false)?);
    }
    Ok(out)
}

/// Longest surface or lemma in the corpus, in characters.
pub fn fit_len_max(sentences: &[Sentence]) -> usize {
    sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .map(|t| t.surface.chars().count().max(t.lemma.chars().count()))
        .max()
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Token, UNK_LABEL};

    fn sent(words: &[&str]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .map(|w| Token {
                    surface: w.to_string(),
                    lemma: w.to_string(),
                    tags: TagSet::all_unk(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn vocab() -> CharVocab {
        CharVocab::from_chars("abcdef".chars())
    }

    #[test]
    fn one_word_sentence_cw4_pads_all_context() {
        let v = vocab();
        let ex = encode_sentence(&sent(&["ab"]), &v, 4, 18, false).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].context_ids.len(), 8);
        for ctx in &ex[0].context_ids {
            assert_eq!(ctx.len(), 18);
            assert!(ctx.iter().all(|&id| id == v.pad_id()));
        }
    }

    #[test]
    fn word_padding_rule() {
        let v = vocab();
        let ex = encode_sentence(&sent(&["ab"]), &v, 0, 18, false).unwrap();
        let ids = &ex[0].word_ids;
        assert_eq!(ids.len(), 18);
        assert_eq!(ids[0], v.encode('a'));
        assert_eq!(ids[1], v.encode('b'));
        assert!(ids[2..].iter().all(|&id| id == v.pad_id()));
    }

    #[test]
    fn middle_word_cw1_context_is_neighbors() {
        let v = vocab();
        let ex = encode_sentence(&sent(&["ab", "cd", "ef"]), &v, 1, 18, false).unwrap();
        let mid = &ex[1];
        assert_eq!(mid.context_ids.len(), 2);
        assert_eq!(mid.context_ids[0][0], v.encode('a'));
        assert_eq!(mid.context_ids[1][0], v.encode('e'));
        assert_eq!(mid.position, 1);
    }

    #[test]
    fn overlong_token_rejected_by_name() {
        let v = vocab();
        let err = encode_sentence(&sent(&["abcdef"]), &v, 0, 3, false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("abcdef"), "error should name the token: {err}");
    }

    #[test]
    fn truncate_mode_shortens_instead() {
        let v = vocab();
        let ex = encode_sentence(&sent(&["abcdef"]), &v, 0, 3, true).unwrap();
        assert_eq!(ex[0].word_ids, vec![v.encode('a'), v.encode('b'), v.encode('c')]);
    }

    #[test]
    fn lemma_framing() {
        let v = vocab();
        let ex = encode_sentence(&sent(&["ab"]), &v, 0, 6, false).unwrap();
        let ids = &ex[0].gold_lemma_ids;
        assert_eq!(ids.len(), 8);
        assert_eq!(ids[0], lemma_start(&v));
        assert_eq!(ids[1], v.encode('a'));
        assert_eq!(ids[2], v.encode('b'));
        assert_eq!(ids[3], lemma_stop(&v));
        assert!(ids[4..].iter().all(|&id| id == v.pad_id()));
    }

    #[test]
    fn round_trip_surface_through_encoding() {
        let v = vocab();
        for w in ["a", "fed", "abcdef"] {
            let ex = encode_sentence(&sent(&[w]), &v, 2, 10, false).unwrap();
            assert_eq!(v.decode_word(&ex[0].word_ids), w);
        }
    }

    #[test]
    fn unk_label_constant_is_stable() {
        // The cache format writes this literal; keep it pinned.
        assert_eq!(UNK_LABEL, "Unk");
    }
}
