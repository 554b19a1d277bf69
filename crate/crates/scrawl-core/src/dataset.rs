//! Letter-file ingestion, word assembly, and word-preserving splits.
//!
//! The input is the public OCR letters corpus: tab-separated records of
//! `id, letter, next_id, word_id, position, fold` followed by 128 binary
//! pixels (8 columns x 16 rows, row-major). A `next_id` of -1 terminates a
//! word; consecutive records sharing a `word_id` belong to the same word.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{Bitmap, PIXELS};
use crate::letter::Letter;

/// One labelled glyph record from the letter file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub id: u32,
    pub letter: Letter,
    /// Id of the next letter in the word; `None` closes the word.
    pub next_id: Option<u32>,
    pub word_id: u32,
    /// 1-based position of the glyph within its word.
    pub position: u32,
    /// Cross-validation fold, 0..=9.
    pub fold: u8,
    pub bitmap: Bitmap,
}

/// A word: a contiguous run of glyphs in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSequence {
    pub word_id: u32,
    pub fold: u8,
    /// Indices into the owning dataset's glyph vector.
    pub glyphs: Range<usize>,
}

impl WordSequence {
    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }
}

/// Parsed corpus: glyphs in file order plus the assembled words.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub glyphs: Vec<Glyph>,
    pub words: Vec<WordSequence>,
}

impl Dataset {
    /// Parses a letter file from a reader. See [`parse_dataset`].
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        parse_dataset(reader)
    }

    /// Opens a letter file, transparently decoding gzip (sniffed by magic
    /// bytes, so the extension does not matter).
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = BufReader::new(File::open(path.as_ref())?);
        let header = file.fill_buf()?;
        if header.starts_with(&[0x1f, 0x8b]) {
            Self::from_reader(BufReader::new(flate2::bufread::GzDecoder::new(file)))
        } else {
            Self::from_reader(file)
        }
    }

    /// Serializes the glyphs back to the tab-separated letter format.
    pub fn to_writer(&self, mut writer: impl Write) -> Result<()> {
        for glyph in &self.glyphs {
            let next = glyph.next_id.map_or(-1, |id| id as i64);
            write!(
                writer,
                "{}\t{}\t{}\t{}\t{}\t{}",
                glyph.id, glyph.letter, next, glyph.word_id, glyph.position, glyph.fold
            )?;
            for pixel in glyph.bitmap.pixels() {
                write!(writer, "\t{pixel}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    /// The letters of one word, in order.
    pub fn word_letters(&self, word: &WordSequence) -> Vec<Letter> {
        self.glyphs[word.glyphs.clone()]
            .iter()
            .map(|g| g.letter)
            .collect()
    }

    /// The spelling of one word as a string.
    pub fn spelling(&self, word: &WordSequence) -> String {
        self.glyphs[word.glyphs.clone()]
            .iter()
            .map(|g| g.letter.as_char())
            .collect()
    }

    /// Number of distinct word spellings in the corpus.
    pub fn distinct_spellings(&self) -> usize {
        self.words
            .iter()
            .map(|w| self.spelling(w))
            .collect::<std::collections::HashSet<_>>()
            .len()
    }

    /// The sorted set of fold labels present.
    pub fn folds(&self) -> Vec<u8> {
        let mut folds: Vec<u8> = self.words.iter().map(|w| w.fold).collect();
        folds.sort_unstable();
        folds.dedup();
        folds
    }
}

/// Parses tab-separated glyph records and assembles words.
///
/// Returns all glyphs in file order; malformed records abort parsing with an
/// error naming the 1-based line.
pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut glyphs = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        glyphs.push(parse_record(&line, line_no)?);
    }
    let words = assemble_words(&glyphs)?;
    Ok(Dataset { glyphs, words })
}

fn parse_record(line: &str, line_no: usize) -> Result<Glyph> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let mut fields: Vec<&str> = line.split('\t').collect();
    // Tolerate a single trailing tab.
    if fields.last() == Some(&"") {
        fields.pop();
    }
    if fields.len() != 6 + PIXELS {
        return Err(err(format!(
            "expected {} tab-separated fields, got {}",
            6 + PIXELS,
            fields.len()
        )));
    }

    let id: u32 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad id {:?}", fields[0])))?;
    let letter = match fields[1] {
        s if s.chars().count() == 1 => Letter::from_char(s.chars().next().unwrap())
            .ok_or_else(|| err(format!("letter {s:?} outside a-z")))?,
        s => return Err(err(format!("letter {s:?} outside a-z"))),
    };
    let next_id = match fields[2]
        .parse::<i64>()
        .map_err(|_| err(format!("bad next_id {:?}", fields[2])))?
    {
        -1 => None,
        n if n >= 0 => Some(n as u32),
        n => return Err(err(format!("bad next_id {n}"))),
    };
    let word_id: u32 = fields[3]
        .parse()
        .map_err(|_| err(format!("bad word_id {:?}", fields[3])))?;
    let position: u32 = fields[4]
        .parse()
        .map_err(|_| err(format!("bad position {:?}", fields[4])))?;
    if position == 0 {
        return Err(err("position must be >= 1".into()));
    }
    let fold: u8 = fields[5]
        .parse()
        .map_err(|_| err(format!("bad fold {:?}", fields[5])))?;
    if fold > 9 {
        return Err(err(format!("fold {fold} outside 0..=9")));
    }

    let mut pixels = [0u8; PIXELS];
    for (i, field) in fields[6..].iter().enumerate() {
        pixels[i] = match *field {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("non-binary pixel value {other:?}"))),
        };
    }
    Ok(Glyph {
        id,
        letter,
        next_id,
        word_id,
        position,
        fold,
        bitmap: Bitmap::from_pixels(&pixels)?,
    })
}

/// Groups consecutive glyphs into words.
///
/// A word closes when a glyph's `next_id` is -1, when the following glyph
/// carries a different `word_id`, or at end of input. Positions within a
/// word must increase by exactly 1.
pub fn assemble_words(glyphs: &[Glyph]) -> Result<Vec<WordSequence>> {
    let mut words = Vec::new();
    let mut start = 0usize;
    for i in 0..glyphs.len() {
        let glyph = &glyphs[i];
        if i > start {
            let prev = &glyphs[i - 1];
            if glyph.position != prev.position + 1 {
                return Err(Error::Structure(format!(
                    "word {} positions not contiguous: {} followed by {}",
                    glyph.word_id, prev.position, glyph.position
                )));
            }
            if glyph.fold != prev.fold {
                return Err(Error::Structure(format!(
                    "word {} spans folds {} and {}",
                    glyph.word_id, prev.fold, glyph.fold
                )));
            }
        }
        let closes = glyph.next_id.is_none()
            || glyphs
                .get(i + 1)
                .is_none_or(|next| next.word_id != glyph.word_id);
        if closes {
            words.push(WordSequence {
                word_id: glyph.word_id,
                fold: glyph.fold,
                glyphs: start..i + 1,
            });
            start = i + 1;
        }
    }
    Ok(words)
}

/// Which of the three split groups a word landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Train,
    Validation,
    Test,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Train, Group::Validation, Group::Test];
}

/// A word-preserving split of the corpus into train/validation/test.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    /// Word indices per group, ascending.
    groups: [Vec<usize>; 3],
    /// Glyphs per group.
    pub glyph_counts: [usize; 3],
}

impl SplitAssignment {
    /// Word indices assigned to a group, ascending (file order).
    pub fn words(&self, group: Group) -> &[usize] {
        &self.groups[group as usize]
    }

    /// Glyph indices of a group in file order.
    pub fn glyph_indices(&self, dataset: &Dataset, group: Group) -> Vec<usize> {
        self.words(group)
            .iter()
            .flat_map(|&w| dataset.words[w].glyphs.clone())
            .collect()
    }

    /// Word lengths of a group, matching the glyph order of
    /// [`Self::glyph_indices`].
    pub fn word_lengths(&self, dataset: &Dataset, group: Group) -> Vec<usize> {
        self.words(group)
            .iter()
            .map(|&w| dataset.words[w].len())
            .collect()
    }

    pub fn to_manifest(&self, dataset: &Dataset) -> SplitManifest {
        let ids = |group: Group| {
            self.words(group)
                .iter()
                .map(|&w| dataset.words[w].word_id)
                .collect()
        };
        SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            train: ids(Group::Train),
            validation: ids(Group::Validation),
            test: ids(Group::Test),
            glyph_counts: self.glyph_counts,
        }
    }
}

/// JSON document recording a split: group -> word_id arrays plus seed and
/// ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
    pub glyph_counts: [usize; 3],
}

/// Splits words into three groups, assigning whole folds where possible.
///
/// Whole folds go greedily to the group with the largest relative glyph
/// deficit; folds that would overshoot their best group's target are set
/// aside, their words shuffled by the seeded generator and distributed
/// one at a time to the group with the largest remaining relative deficit.
pub fn split_dataset(
    words: &[WordSequence],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative split ratio in {ratios:?}"
        )));
    }
    let total_ratio: f64 = ratios.iter().sum();
    if (total_ratio - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios sum to {total_ratio}, expected 1"
        )));
    }

    let mut by_fold: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (index, word) in words.iter().enumerate() {
        by_fold.entry(word.fold).or_default().push(index);
    }
    let total_glyphs: usize = words.iter().map(WordSequence::len).sum();
    let targets = ratios.map(|r| r * total_glyphs as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_order: Vec<u8> = by_fold.keys().copied().collect();
    fold_order.shuffle(&mut rng);

    let mut groups: [Vec<usize>; 3] = Default::default();
    let mut assigned = [0f64; 3];
    // Largest relative deficit wins; zero-ratio groups never receive words.
    let best_group = |assigned: &[f64; 3]| {
        (0..3)
            .filter(|&g| ratios[g] > 0.0)
            .max_by(|&a, &b| {
                let deficit = |g: usize| (targets[g] - assigned[g]) / targets[g];
                deficit(a)
                    .partial_cmp(&deficit(b))
                    .unwrap()
                    .then(b.cmp(&a)) // ties toward the lower group index
            })
            .expect("ratios sum to 1, so some group is eligible")
    };

    let mut partial_words: Vec<usize> = Vec::new();
    for fold in fold_order {
        let fold_words = &by_fold[&fold];
        let fold_glyphs: usize = fold_words.iter().map(|&w| words[w].len()).sum();
        let g = best_group(&assigned);
        if assigned[g] + fold_glyphs as f64 <= targets[g] + 1e-9 {
            groups[g].extend_from_slice(fold_words);
            assigned[g] += fold_glyphs as f64;
        } else {
            partial_words.extend_from_slice(fold_words);
        }
    }

    partial_words.shuffle(&mut rng);
    for word in partial_words {
        let g = best_group(&assigned);
        groups[g].push(word);
        assigned[g] += words[word].len() as f64;
    }

    for group in &mut groups {
        group.sort_unstable();
    }
    let glyph_counts =
        [0, 1, 2].map(|g: usize| groups[g].iter().map(|&w| words[w].len()).sum());
    Ok(SplitAssignment {
        seed,
        ratios,
        groups,
        glyph_counts,
    })
}
