//! Synthetic desk-scale corpus with fully deterministic tag and lemma
//! rules, used by the overfit-capacity and calibration experiments.
//!
//! Token grammar (ASCII, so the vocabulary stays tiny):
//! - every lemma is a CVCV stem; the surface replaces the stem's final
//!   vowel with an inflection vowel, and verbs append a two-letter TAM
//!   suffix;
//! - POS comes from the first letter (`b/d/g` noun, `k/m/n` verb, `p/r/s`
//!   adjective);
//! - the inflection vowel fixes gender and number (`a` m.sg, `i` f.sg,
//!   `e` m.pl, `u` f.pl);
//! - person comes from the stem's second letter, case from whether the
//!   first letter is unvoiced (`b/k/p` direct, rest oblique);
//! - the TAM label is the verb suffix itself, `Unk` elsewhere.
//!
//! Every tag is therefore recoverable from the surface alone, and the
//! lemma is a short character transduction, so a correctly wired model can
//! overfit the corpus essentially perfectly.

use crate::corpus::{LabeledToken, Tag, UNK_LABEL};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const NOUN_STEMS: [&str; 6] = ["bado", "bemi", "dugo", "dima", "gano", "gesu"];
const VERB_STEMS: [&str; 6] = ["kapo", "kine", "mago", "mudi", "nito", "nera"];
const ADJ_STEMS: [&str; 6] = ["pilo", "pena", "rudo", "rika", "somu", "sani"];
const INFLECTIONS: [(char, &str, &str); 4] =
    [('a', "m", "sg"), ('i', "f", "sg"), ('e', "m", "pl"), ('u', "f", "pl")];
const TAM_SUFFIXES: [&str; 2] = ["ta", "ga"];

/// Fixed seed of the shipped corpus; the rendered file is a build artifact
/// of this module and a test keeps the two in sync.
const SHIPPED_SEED: u64 = 0xA11CE;
const SHIPPED_SENTENCES: usize = 50;

fn person_of(second: char) -> &'static str {
    match second {
        'a' | 'o' => "1",
        'e' | 'u' => "2",
        _ => "3",
    }
}

fn make_token(rng: &mut ChaCha8Rng) -> LabeledToken {
    let (pos, stem) = match rng.gen_range(0..3) {
        0 => ("n", NOUN_STEMS[rng.gen_range(0..NOUN_STEMS.len())]),
        1 => ("v", VERB_STEMS[rng.gen_range(0..VERB_STEMS.len())]),
        _ => ("adj", ADJ_STEMS[rng.gen_range(0..ADJ_STEMS.len())]),
    };
    let (vowel, gender, number) = INFLECTIONS[rng.gen_range(0..INFLECTIONS.len())];
    let stem_chars: Vec<char> = stem.chars().collect();
    let mut surface: String = stem_chars[..stem_chars.len() - 1].iter().collect();
    surface.push(vowel);
    let tam = if pos == "v" {
        let sfx = TAM_SUFFIXES[rng.gen_range(0..TAM_SUFFIXES.len())];
        surface.push_str(sfx);
        sfx
    } else {
        UNK_LABEL
    };
    let case = match stem_chars[0] {
        'b' | 'k' | 'p' => "d",
        _ => "o",
    };
    let mut labels: [String; 6] = std::array::from_fn(|_| UNK_LABEL.to_string());
    labels[Tag::Pos.index()] = pos.to_string();
    labels[Tag::Gender.index()] = gender.to_string();
    labels[Tag::Number.index()] = number.to_string();
    labels[Tag::Person.index()] = person_of(stem_chars[1]).to_string();
    labels[Tag::Case.index()] = case.to_string();
    labels[Tag::Tam.index()] = tam.to_string();
    LabeledToken {
        surface,
        lemma: stem.to_string(),
        labels,
    }
}

/// Generate `n` sentences of 4-7 tokens with the given seed.
pub fn generate(n: usize, seed: u64) -> Vec<Vec<LabeledToken>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(4..=7);
            (0..len).map(|_| make_token(&mut rng)).collect()
        })
        .collect()
}

/// The shipped 50-sentence corpus.
pub fn sentences() -> Vec<Vec<LabeledToken>> {
    generate(SHIPPED_SENTENCES, SHIPPED_SEED)
}

/// Render sentences in the standard 8-column layout, `Unk` written as `-`.
pub fn render(sentences: &[Vec<LabeledToken>]) -> String {
    let mut out = String::new();
    for (si, sent) in sentences.iter().enumerate() {
        if si > 0 {
            out.push('\n');
        }
        for tok in sent {
            out.push_str(&tok.surface);
            out.push('\t');
            out.push_str(&tok.lemma);
            for tag in Tag::ALL {
                out.push('\t');
                let label = &tok.labels[tag.index()];
                out.push_str(if label == UNK_LABEL { "-" } else { label });
            }
            out.push('\n');
        }
    }
    out
}

/// Manifest matching [`render`]'s column order.
pub fn manifest_text() -> &'static str {
    "# synthetic toy corpus\ncolumns=surface,lemma,pos,gender,number,person,case,tam\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_corpus_has_fifty_sentences() {
        let s = sentences();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|x| (4..=7).contains(&x.len())));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(10, 42), generate(10, 42));
    }

    #[test]
    fn tags_follow_the_stated_rules() {
        for sent in sentences() {
            for tok in sent {
                let first = tok.surface.chars().next().unwrap();
                let pos = &tok.labels[Tag::Pos.index()];
                match first {
                    'b' | 'd' | 'g' => assert_eq!(pos, "n"),
                    'k' | 'm' | 'n' => assert_eq!(pos, "v"),
                    _ => assert_eq!(pos, "adj"),
                }
                let chars: Vec<char> = tok.surface.chars().collect();
                let infl = if pos == "v" {
                    chars[chars.len() - 3]
                } else {
                    chars[chars.len() - 1]
                };
                let expect = INFLECTIONS.iter().find(|(v, _, _)| *v == infl).unwrap();
                assert_eq!(&tok.labels[Tag::Gender.index()], expect.1);
                assert_eq!(&tok.labels[Tag::Number.index()], expect.2);
                // Lemma shares the stem prefix with the surface.
                assert_eq!(tok.lemma.len(), 4);
                assert_eq!(tok.surface[..3], tok.lemma[..3]);
            }
        }
    }

    #[test]
    fn render_round_trips_through_the_parser() {
        let sents = sentences();
        let text = render(&sents);
        let manifest =
            crate::corpus::ColumnManifest::parse(manifest_text()).unwrap();
        let parsed = crate::corpus::parse::parse_labeled("toy", &text, &manifest).unwrap();
        assert_eq!(parsed, sents);
    }

    #[test]
    fn shipped_files_match_the_generator() {
        assert_eq!(
            include_str!("../../data/toy.tsv"),
            render(&sentences()),
            "data/toy.tsv drifted from the generator"
        );
        assert_eq!(include_str!("../../data/toy.manifest"), manifest_text());
    }
}
