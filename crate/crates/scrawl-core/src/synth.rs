//! Synthetic miniature corpora for tests and benchmarks.
//!
//! Each letter gets a fixed pseudo-random archetype bitmap; word instances
//! are archetype sequences with seeded per-pixel flip noise. The output
//! uses the same record layout as the real letter file, so every pipeline
//! stage runs on it unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{assemble_words, Dataset, Glyph};
use crate::imageops::{Bitmap, HEIGHT, WIDTH};
use crate::letter::{letters_of, Letter};

/// A word list covering all 26 letters.
pub const DEFAULT_LEXICON: [&str; 16] = [
    "the", "quick", "brown", "fox", "jumps", "over", "lazy", "dog", "pack", "my", "box", "with",
    "five", "dozen", "liquor", "jugs",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub lexicon: Vec<String>,
    pub instances_per_word: usize,
    /// Per-pixel flip probability applied to the archetypes.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            lexicon: DEFAULT_LEXICON.iter().map(|s| s.to_string()).collect(),
            instances_per_word: 10,
            noise: 0.03,
            seed: 42,
        }
    }
}

/// The fixed archetype bitmap of a letter: a seeded random blob in the
/// 6x10 interior of the frame.
pub fn archetype(letter: Letter) -> Bitmap {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_u64 + letter.index() as u64);
    Bitmap::from_fn(|col, row| {
        let interior = (1..=6).contains(&col) && (3..=12).contains(&row);
        interior && rng.gen_bool(0.4)
    })
}

/// Generates a corpus: every lexicon word repeated `instances_per_word`
/// times, instance `i` landing in fold `i % 10`.
pub fn generate(config: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut glyphs = Vec::new();
    let mut next_glyph_id = 1u32;
    let mut word_id = 0u32;
    for instance in 0..config.instances_per_word {
        let fold = (instance % 10) as u8;
        for word in &config.lexicon {
            word_id += 1;
            let letters = letters_of(word).expect("lexicon words are lowercase a-z");
            let len = letters.len();
            for (pos, letter) in letters.into_iter().enumerate() {
                let mut bitmap = archetype(letter);
                for row in 0..HEIGHT {
                    for col in 0..WIDTH {
                        if rng.gen_bool(config.noise) {
                            bitmap.set(col, row, !bitmap.get(col, row));
                        }
                    }
                }
                let last = pos + 1 == len;
                glyphs.push(Glyph {
                    id: next_glyph_id,
                    letter,
                    next_id: (!last).then_some(next_glyph_id + 1),
                    word_id,
                    position: pos as u32 + 1,
                    fold,
                    bitmap,
                });
                next_glyph_id += 1;
            }
        }
    }
    let words = assemble_words(&glyphs).expect("generated words are contiguous");
    Dataset { glyphs, words }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_and_coverage() {
        let config = SynthConfig::default();
        let ds = generate(&config);
        assert_eq!(ds.words.len(), config.lexicon.len() * config.instances_per_word);
        assert_eq!(ds.folds(), (0..10).collect::<Vec<u8>>());
        // All 26 letters appear in every fold.
        for fold in 0..10u8 {
            let mut seen = [false; 26];
            for w in ds.words.iter().filter(|w| w.fold == fold) {
                for l in ds.word_letters(w) {
                    seen[l.index()] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "fold {fold} missing letters");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::default();
        assert_eq!(generate(&config), generate(&config));
    }

    #[test]
    fn archetypes_are_distinct() {
        for a in Letter::all() {
            assert!(!archetype(a).is_empty());
            for b in Letter::all().filter(|&b| b != a) {
                assert_ne!(archetype(a), archetype(b));
            }
        }
    }

    #[test]
    fn round_trips_through_the_letter_format() {
        let ds = generate(&SynthConfig {
            instances_per_word: 2,
            ..Default::default()
        });
        let mut buffer = Vec::new();
        ds.to_writer(&mut buffer).unwrap();
        let reparsed = Dataset::from_reader(buffer.as_slice()).unwrap();
        assert_eq!(reparsed, ds);
    }
}
