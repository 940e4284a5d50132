//! Seeded generation of eventually periodic texts for a given language.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Datum, FinSeq, Text};

use super::HarnessError;

/// Corpus shape knobs. `max_head` is a soft target; heads are never shorter
/// than the language when the tail is all pauses.
#[derive(Debug, Clone)]
pub struct TextGenParams {
    pub max_head: usize,
    pub variants: usize,
}

impl Default for TextGenParams {
    fn default() -> Self {
        TextGenParams {
            max_head: 8,
            variants: 6,
        }
    }
}

fn lang_rng(lang: &BTreeSet<u32>, seed: u64) -> ChaCha8Rng {
    // fold the language into the stream position so different languages get
    // different but reproducible corpora from one seed
    let salt = lang.iter().fold(0u64, |acc, &x| {
        acc.wrapping_mul(31).wrapping_add(u64::from(x) + 1)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

/// Deterministic corpus of texts, each with content exactly `lang`. The
/// canonical sorted presentation is always first.
pub fn gen_texts(
    lang: &BTreeSet<u32>,
    params: &TextGenParams,
    seed: u64,
    universe: u32,
) -> Result<Vec<Text>, HarnessError> {
    if let Some(&x) = lang.iter().find(|&&x| x > universe) {
        return Err(HarnessError::LanguageOutOfUniverse {
            element: x,
            universe,
        });
    }
    let sorted: Vec<u32> = lang.iter().copied().collect();
    let canonical = Text::with_pause_tail(sorted.iter().map(|&x| Datum::Num(x)).collect());
    let mut corpus = vec![canonical];
    let mut rng = lang_rng(lang, seed);

    for variant in 0..params.variants {
        let mut data = sorted.clone();
        data.shuffle(&mut rng);
        let text = match variant % 3 {
            // shuffled full head, pauses forever after
            0 => {
                let head: FinSeq = data.iter().map(|&x| Datum::Num(x)).collect();
                Text::with_pause_tail(head)
            }
            // pause-inflated and duplicated head
            1 => {
                let mut head = FinSeq::new();
                for &x in &data {
                    if rng.gen_bool(0.4) {
                        head.push(Datum::Pause);
                    }
                    head.push(Datum::Num(x));
                    if rng.gen_bool(0.25) {
                        head.push(Datum::Num(x));
                    }
                }
                while head.len() < params.max_head.min(2 * data.len().max(1)) {
                    head.push(Datum::Pause);
                }
                Text::with_pause_tail(head)
            }
            // partial head with the whole language cycling in the tail
            _ => {
                let cut = if data.is_empty() {
                    0
                } else {
                    rng.gen_range(0..=data.len())
                };
                let head: FinSeq = data[..cut].iter().map(|&x| Datum::Num(x)).collect();
                let mut tail: FinSeq = data.iter().map(|&x| Datum::Num(x)).collect();
                tail.push(Datum::Pause);
                Text::new(head, tail).expect("tail carries at least the pause")
            }
        };
        corpus.push(text);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;

    #[test]
    fn canonical_text_is_included() {
        let corpus = gen_texts(&fixtures::lang_l4(), &TextGenParams::default(), 7, 16).unwrap();
        assert_eq!(corpus[0].to_string(), "0,4,8,12,16|#");
    }

    #[test]
    fn every_text_has_exact_content() {
        let lang = fixtures::lang_l4();
        let corpus = gen_texts(&lang, &TextGenParams::default(), 7, 16).unwrap();
        assert!(corpus.len() >= 7);
        for text in &corpus {
            assert_eq!(text.content(), lang, "{text}");
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let lang = fixtures::lang_l2();
        let a = gen_texts(&lang, &TextGenParams::default(), 7, 16).unwrap();
        let b = gen_texts(&lang, &TextGenParams::default(), 7, 16).unwrap();
        assert_eq!(a, b);
        let c = gen_texts(&lang, &TextGenParams::default(), 8, 16).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_universe_language_rejected() {
        let lang: BTreeSet<u32> = [99].into_iter().collect();
        assert!(gen_texts(&lang, &TextGenParams::default(), 7, 16).is_err());
    }

    #[test]
    fn empty_language_degenerates_gracefully() {
        let corpus = gen_texts(&BTreeSet::new(), &TextGenParams::default(), 7, 16).unwrap();
        for text in &corpus {
            assert!(text.content().is_empty());
        }
    }
}
