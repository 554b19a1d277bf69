//! Word-level letter-sequence models and Viterbi error correction.
//!
//! The model is estimated by counting within-word letter adjacencies on the
//! training words. Decoding maximizes, in log space,
//! `ln pi(s1) + ln e(s1,1) + sum_t [ln A(s_{t-1}, s_t) + ln e(s_t, t)]`
//! over letter sequences, with three variants for handling the last letter.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::EmissionMatrix;
use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

/// How the decoder treats the final letter of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    /// Mode 1: the whole word is one plain sequence.
    Plain,
    /// Mode 2: an additional end state contributes a final-letter factor.
    EndState,
    /// Mode 3: the last transition uses its own matrix.
    LastTransition,
}

impl DecodeMode {
    pub const ALL: [DecodeMode; 3] = [
        DecodeMode::Plain,
        DecodeMode::EndState,
        DecodeMode::LastTransition,
    ];

    /// Numeric tag 1..=3.
    pub fn number(self) -> u8 {
        match self {
            DecodeMode::Plain => 1,
            DecodeMode::EndState => 2,
            DecodeMode::LastTransition => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.number() == n)
    }
}

/// Which estimate feeds the mode-2 end factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndModel {
    /// The marginal final-letter distribution (default).
    #[default]
    Marginal,
    /// Per-letter conditionals P(word ends | letter).
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeOptions {
    pub end_model: EndModel,
}

/// Letter-sequence model: transition matrix, initial distribution,
/// final-letter distribution, and the optional dedicated last-transition
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    /// 26 x 26; rows sum to 1 or are all zero.
    pub transition: Array2<f64>,
    /// First-letter distribution, sums to 1.
    pub initial: Vec<f64>,
    /// Last-letter distribution, sums to 1.
    pub final_dist: Vec<f64>,
    /// Penultimate-to-final transition matrix (mode 3).
    pub final_transition: Option<Array2<f64>>,
    /// P(word ends | letter), for the conditional end model.
    pub final_conditional: Option<Vec<f64>>,
}

impl HmmModel {
    /// Estimates all parameters from training words.
    pub fn estimate(words: &[Vec<Letter>], smoothing_alpha: f64) -> Result<Self> {
        Ok(HmmModel {
            transition: estimate_transition_matrix_with(words, smoothing_alpha)?,
            initial: estimate_initial_probs(words)?,
            final_dist: estimate_final_probs(words)?,
            final_transition: Some(estimate_final_transition_matrix_with(
                words,
                smoothing_alpha,
            )?),
            final_conditional: Some(estimate_end_conditional(words)),
        })
    }
}

fn require_nonempty(words: &[Vec<Letter>]) -> Result<()> {
    if words.is_empty() || words.iter().all(Vec::is_empty) {
        Err(Error::InvalidArgument("empty training corpus".into()))
    } else {
        Ok(())
    }
}

fn normalize_rows(counts: &mut Array2<f64>, alpha: f64) {
    for mut row in counts.rows_mut() {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 || alpha > 0.0 {
            let denominator = sum + alpha * ALPHABET as f64;
            row.mapv_inplace(|c| (c + alpha) / denominator);
        }
    }
}

/// Within-word adjacent-pair counts, row-normalized; zero-count rows stay
/// zero.
pub fn estimate_transition_matrix(words: &[Vec<Letter>]) -> Result<Array2<f64>> {
    estimate_transition_matrix_with(words, 0.0)
}

/// Like [`estimate_transition_matrix`] with optional add-alpha smoothing.
pub fn estimate_transition_matrix_with(
    words: &[Vec<Letter>],
    alpha: f64,
) -> Result<Array2<f64>> {
    require_nonempty(words)?;
    let mut counts = Array2::zeros((ALPHABET, ALPHABET));
    for word in words {
        for pair in word.windows(2) {
            counts[[pair[0].index(), pair[1].index()]] += 1.0;
        }
    }
    normalize_rows(&mut counts, alpha);
    Ok(counts)
}

/// First-letter frequencies, normalized to sum 1.
pub fn estimate_initial_probs(words: &[Vec<Letter>]) -> Result<Vec<f64>> {
    require_nonempty(words)?;
    let mut counts = vec![0.0; ALPHABET];
    let mut total = 0.0;
    for word in words {
        if let Some(first) = word.first() {
            counts[first.index()] += 1.0;
            total += 1.0;
        }
    }
    for c in &mut counts {
        *c /= total;
    }
    Ok(counts)
}

/// Last-letter frequencies, normalized to sum 1.
pub fn estimate_final_probs(words: &[Vec<Letter>]) -> Result<Vec<f64>> {
    require_nonempty(words)?;
    let mut counts = vec![0.0; ALPHABET];
    let mut total = 0.0;
    for word in words {
        if let Some(last) = word.last() {
            counts[last.index()] += 1.0;
            total += 1.0;
        }
    }
    for c in &mut counts {
        *c /= total;
    }
    Ok(counts)
}

/// Penultimate-to-final pair counts, row-normalized; a corpus without any
/// word of length >= 2 yields the zero matrix with a warning.
pub fn estimate_final_transition_matrix(words: &[Vec<Letter>]) -> Result<Array2<f64>> {
    estimate_final_transition_matrix_with(words, 0.0)
}

pub fn estimate_final_transition_matrix_with(
    words: &[Vec<Letter>],
    alpha: f64,
) -> Result<Array2<f64>> {
    require_nonempty(words)?;
    let mut counts = Array2::zeros((ALPHABET, ALPHABET));
    let mut seen_pair = false;
    for word in words {
        if word.len() >= 2 {
            let penultimate = word[word.len() - 2];
            let last = word[word.len() - 1];
            counts[[penultimate.index(), last.index()]] += 1.0;
            seen_pair = true;
        }
    }
    if !seen_pair {
        log::warn!("no words of length >= 2: final-transition matrix is all zero");
    }
    normalize_rows(&mut counts, alpha);
    Ok(counts)
}

/// P(word ends | letter): final occurrences over all occurrences, per
/// letter; letters never seen get 0.
pub fn estimate_end_conditional(words: &[Vec<Letter>]) -> Vec<f64> {
    let mut final_counts = vec![0.0f64; ALPHABET];
    let mut total_counts = vec![0.0f64; ALPHABET];
    for word in words {
        for letter in word {
            total_counts[letter.index()] += 1.0;
        }
        if let Some(last) = word.last() {
            final_counts[last.index()] += 1.0;
        }
    }
    (0..ALPHABET)
        .map(|i| {
            if total_counts[i] > 0.0 {
                final_counts[i] / total_counts[i]
            } else {
                0.0
            }
        })
        .collect()
}

/// The decoded letter sequence of one word.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedWord {
    pub letters: Vec<Letter>,
    pub log_likelihood: f64,
    /// True when every path scored -inf and the decoder fell back to the
    /// per-column emission argmax.
    pub fallback: bool,
}

/// Precomputed log-domain tables of a model.
struct LogModel {
    ln_transition: Array2<f64>,
    ln_initial: [f64; ALPHABET],
    ln_end: [f64; ALPHABET],
    ln_final_transition: Option<Array2<f64>>,
}

impl LogModel {
    fn new(model: &HmmModel, options: DecodeOptions) -> Result<Self> {
        let end = match options.end_model {
            EndModel::Marginal => &model.final_dist,
            EndModel::Conditional => model.final_conditional.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "conditional end model requested but not estimated".into(),
                )
            })?,
        };
        Ok(LogModel {
            ln_transition: model.transition.mapv(f64::ln),
            ln_initial: std::array::from_fn(|i| model.initial[i].ln()),
            ln_end: std::array::from_fn(|i| end[i].ln()),
            ln_final_transition: model.final_transition.as_ref().map(|m| m.mapv(f64::ln)),
        })
    }
}

/// Viterbi decode of one word's emission columns (26 x L).
pub fn viterbi_decode(
    model: &HmmModel,
    emissions: &ArrayView2<f64>,
    mode: DecodeMode,
    options: DecodeOptions,
) -> Result<DecodedWord> {
    let logs = LogModel::new(model, options)?;
    decode_word(&logs, emissions, mode)
}

fn decode_word(
    logs: &LogModel,
    emissions: &ArrayView2<f64>,
    mode: DecodeMode,
) -> Result<DecodedWord> {
    let length = emissions.ncols();
    if length == 0 {
        return Err(Error::InvalidArgument("empty word".into()));
    }
    if emissions.nrows() != ALPHABET {
        return Err(Error::DimensionMismatch {
            expected: ALPHABET,
            actual: emissions.nrows(),
        });
    }
    if mode == DecodeMode::LastTransition && logs.ln_final_transition.is_none() {
        return Err(Error::InvalidArgument(
            "mode 3 requires a final-transition matrix".into(),
        ));
    }

    let ln_e = |s: usize, t: usize| emissions[[s, t]].ln();
    let mut delta = vec![[f64::NEG_INFINITY; ALPHABET]; length];
    let mut psi = vec![[0usize; ALPHABET]; length];

    for s in 0..ALPHABET {
        delta[0][s] = logs.ln_initial[s] + ln_e(s, 0);
    }
    // Single-letter words under modes 2 and 3 take the end factor directly.
    if length == 1 && (mode == DecodeMode::EndState || mode == DecodeMode::LastTransition) {
        for s in 0..ALPHABET {
            delta[0][s] += logs.ln_end[s];
        }
    }

    for t in 1..length {
        let transition = if t == length - 1 && mode == DecodeMode::LastTransition {
            logs.ln_final_transition.as_ref().unwrap()
        } else {
            &logs.ln_transition
        };
        for s in 0..ALPHABET {
            let mut best_prev = 0usize;
            let mut best = delta[t - 1][0] + transition[[0, s]];
            for prev in 1..ALPHABET {
                let score = delta[t - 1][prev] + transition[[prev, s]];
                if score > best {
                    best = score;
                    best_prev = prev;
                }
            }
            delta[t][s] = best + ln_e(s, t);
            psi[t][s] = best_prev;
        }
    }
    if length > 1 && mode == DecodeMode::EndState {
        for s in 0..ALPHABET {
            delta[length - 1][s] += logs.ln_end[s];
        }
    }

    let mut last = 0usize;
    for s in 1..ALPHABET {
        if delta[length - 1][s] > delta[length - 1][last] {
            last = s;
        }
    }
    let score = delta[length - 1][last];

    if score == f64::NEG_INFINITY {
        // No sequence has positive probability: emit the per-column argmax.
        log::warn!("all Viterbi paths impossible for a length-{length} word; using emission argmax");
        let letters = (0..length)
            .map(|t| {
                let mut best = 0usize;
                for s in 1..ALPHABET {
                    if emissions[[s, t]] > emissions[[best, t]] {
                        best = s;
                    }
                }
                Letter::from_index(best).unwrap()
            })
            .collect();
        return Ok(DecodedWord {
            letters,
            log_likelihood: f64::NEG_INFINITY,
            fallback: true,
        });
    }

    let mut path = vec![0usize; length];
    path[length - 1] = last;
    for t in (0..length - 1).rev() {
        path[t] = psi[t + 1][path[t + 1]];
    }
    Ok(DecodedWord {
        letters: path
            .into_iter()
            .map(|s| Letter::from_index(s).unwrap())
            .collect(),
        log_likelihood: score,
        fallback: false,
    })
}

/// Decodes every test word by slicing its contiguous columns out of the
/// emission matrix.
pub fn correct_words(
    model: &HmmModel,
    emissions: &EmissionMatrix,
    word_lengths: &[usize],
    mode: DecodeMode,
    options: DecodeOptions,
) -> Result<Vec<DecodedWord>> {
    let total: usize = word_lengths.iter().sum();
    if total != emissions.columns() {
        return Err(Error::Structure(format!(
            "word lengths cover {total} samples but the emission matrix has {} columns",
            emissions.columns()
        )));
    }
    if word_lengths.iter().any(|&l| l == 0) {
        return Err(Error::Structure("zero-length word in test set".into()));
    }
    let logs = LogModel::new(model, options)?;
    let mut offsets = Vec::with_capacity(word_lengths.len());
    let mut offset = 0;
    for &len in word_lengths {
        offsets.push(offset);
        offset += len;
    }
    word_lengths
        .par_iter()
        .zip(&offsets)
        .map(|(&len, &start)| {
            let columns = emissions
                .values()
                .slice(ndarray::s![.., start..start + len]);
            decode_word(&logs, &columns, mode)
        })
        .collect()
}
