//! The four probability-emitting base classifiers.
//!
//! Each classifier scores every test sample against all 26 letter classes.
//! Raw decision scores drive hard predictions via [`classify_argmax`]; the
//! per-sample class likelihoods, row-normalized by [`normalize_emissions`],
//! become the emission probabilities consumed by the word-level decoders.

pub mod knn;
pub mod naive_bayes;
pub mod network;
pub mod parzen;

pub use knn::{knn_emissions, train_knn, KnnModel, KnnOptions};
pub use naive_bayes::{nb_emissions, train_naive_bayes, NaiveBayesModel, NaiveBayesOptions};
pub use network::{nn_emissions, train_neural_oaa, NetworkOptions, OaaNetworkModel};
pub use parzen::{parzen_emissions, train_parzen, ParzenKernel, ParzenModel, ParzenOptions};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

/// A 26 x N matrix of emission probabilities: row = letter class, column =
/// test sample. Rows with a nonzero sum are normalized to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionMatrix {
    values: Array2<f64>,
    /// Rows whose sum was zero and were left untouched.
    zero_rows: Vec<usize>,
}

impl EmissionMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    /// Writes the matrix as CSV: one row per letter, one column per sample.
    pub fn to_csv(&self, mut writer: impl std::io::Write) -> Result<()> {
        for (index, row) in self.values.rows().into_iter().enumerate() {
            let letter = Letter::from_index(index).unwrap();
            write!(writer, "{letter}")?;
            for v in row {
                write!(writer, ",{v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

/// Divides each row of a nonnegative 26 x N matrix by its sum. All-zero
/// rows stay zero and are reported in the result.
pub fn normalize_emissions(raw: &Array2<f64>) -> Result<EmissionMatrix> {
    if raw.nrows() != ALPHABET {
        return Err(Error::DimensionMismatch {
            expected: ALPHABET,
            actual: raw.nrows(),
        });
    }
    if let Some(bad) = raw.iter().find(|v| **v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "emission entries must be nonnegative, found {bad}"
        )));
    }
    let mut values = raw.clone();
    let mut zero_rows = Vec::new();
    for (index, mut row) in values.rows_mut().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        } else {
            zero_rows.push(index);
        }
    }
    if !zero_rows.is_empty() {
        log::debug!("emission normalization left {} zero rows", zero_rows.len());
    }
    Ok(EmissionMatrix { values, zero_rows })
}

/// Per column, the letter of the maximal raw score; ties break toward the
/// lower letter index.
pub fn classify_argmax(scores: &ArrayView2<f64>) -> Vec<Letter> {
    scores
        .columns()
        .into_iter()
        .map(|column| {
            let mut best = 0usize;
            for i in 1..column.len() {
                if column[i] > column[best] {
                    best = i;
                }
            }
            Letter::from_index(best).expect("scores have 26 rows")
        })
        .collect()
}

/// Empirical class frequencies of a label set.
pub fn class_priors(labels: &[Letter]) -> [f64; ALPHABET] {
    let mut priors = [0.0; ALPHABET];
    for l in labels {
        priors[l.index()] += 1.0;
    }
    let n = labels.len() as f64;
    if n > 0.0 {
        for p in &mut priors {
            *p /= n;
        }
    }
    priors
}

/// Squared Euclidean distance between feature rows.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        Err(Error::DimensionMismatch { expected, actual })
    } else {
        Ok(())
    }
}

/// A trained base classifier that can score and emit for a test block.
pub trait BaseClassifier: Send + Sync {
    /// Raw 26 x N decision scores for hard prediction (argmax per column).
    fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Decision scores on the training block, for resubstitution accuracy.
    /// Memorizing classifiers (kNN, Parzen) exclude the query point itself.
    fn train_scores(&self, train: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.decision_scores(train)
    }

    /// Row-normalized emission matrix for a test block.
    fn emissions(&self, test: &ArrayView2<f64>) -> Result<EmissionMatrix>;

    /// Scores and emissions together; classifiers with an expensive test
    /// pass override this to share the work.
    fn scores_and_emissions(&self, test: &ArrayView2<f64>) -> Result<(Array2<f64>, EmissionMatrix)> {
        Ok((self.decision_scores(test)?, self.emissions(test)?))
    }
}

/// Versioned JSON wrapper for model persistence.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Knn(KnnModel),
    Parzen(ParzenModel),
    NaiveBayes(NaiveBayesModel),
    Network(OaaNetworkModel),
}

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SavedModelDocument {
    version: u32,
    #[serde(flatten)]
    model: SavedModel,
}

pub fn save_model(model: &SavedModel, writer: impl std::io::Write) -> Result<()> {
    // Serialize through a borrowing shim to avoid cloning model weights.
    #[derive(Serialize)]
    struct Doc<'a> {
        version: u32,
        #[serde(flatten)]
        model: &'a SavedModel,
    }
    serde_json::to_writer(
        writer,
        &Doc {
            version: MODEL_FORMAT_VERSION,
            model,
        },
    )?;
    Ok(())
}

pub fn load_model(reader: impl std::io::Read) -> Result<SavedModel> {
    let doc: SavedModelDocument = serde_json::from_reader(reader)?;
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {}",
            doc.version
        )));
    }
    Ok(doc.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn wide(rows: Vec<Vec<f64>>) -> Array2<f64> {
        // Expand a small fixture into a full 26-row matrix.
        let cols = rows[0].len();
        let mut m = Array2::zeros((ALPHABET, cols));
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    #[test]
    fn normalization_arithmetic() {
        let raw = wide(vec![vec![1.0, 1.0, 2.0], vec![0.0, 0.0, 4.0]]);
        let em = normalize_emissions(&raw).unwrap();
        assert_relative_eq!(em.values()[[0, 0]], 0.25);
        assert_relative_eq!(em.values()[[0, 1]], 0.25);
        assert_relative_eq!(em.values()[[0, 2]], 0.5);
        assert_relative_eq!(em.values()[[1, 0]], 0.0);
        assert_relative_eq!(em.values()[[1, 2]], 1.0);
        // Unpopulated fixture rows are all-zero and reported.
        assert_eq!(em.zero_rows().len(), ALPHABET - 2);
    }

    #[test]
    fn single_nonzero_entry_becomes_one() {
        let raw = wide(vec![vec![0.0, 3.5], vec![0.7, 0.0]]);
        let em = normalize_emissions(&raw).unwrap();
        assert_relative_eq!(em.values()[[0, 1]], 1.0);
        assert_relative_eq!(em.values()[[1, 0]], 1.0);
    }

    #[test]
    fn negative_entries_rejected() {
        let raw = wide(vec![vec![1.0, -0.5]]);
        assert!(matches!(
            normalize_emissions(&raw),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn argmax_tie_prefers_lower_letter() {
        let mut raw = Array2::zeros((ALPHABET, 1));
        raw[[1, 0]] = 2.0; // b
        raw[[3, 0]] = 2.0; // d
        let pred = classify_argmax(&raw.view());
        assert_eq!(pred[0].as_char(), 'b');
    }

    #[test]
    fn argmax_on_one_hot_columns() {
        let raw = array![[0.0, 1.0], [1.0, 0.0]];
        let raw = {
            let mut m = Array2::zeros((ALPHABET, 2));
            m.slice_mut(ndarray::s![0..2, ..]).assign(&raw);
            m
        };
        let pred = classify_argmax(&raw.view());
        assert_eq!(pred[0].as_char(), 'b');
        assert_eq!(pred[1].as_char(), 'a');
    }

    proptest! {
        #[test]
        fn normalized_rows_sum_to_one_or_zero(
            values in proptest::collection::vec(0.0f64..10.0, ALPHABET * 4)
        ) {
            let raw = Array2::from_shape_vec((ALPHABET, 4), values).unwrap();
            let em = normalize_emissions(&raw).unwrap();
            for (i, row) in em.values().rows().into_iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if em.zero_rows().contains(&i) {
                    prop_assert_eq!(sum, 0.0);
                } else {
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn normalization_never_changes_row_argmax(
            values in proptest::collection::vec(0.0f64..10.0, ALPHABET * 3)
        ) {
            let raw = Array2::from_shape_vec((ALPHABET, 3), values).unwrap();
            let em = normalize_emissions(&raw).unwrap();
            for i in 0..ALPHABET {
                let raw_argmax = (0..3)
                    .max_by(|&a, &b| raw[[i, a]].partial_cmp(&raw[[i, b]]).unwrap())
                    .unwrap();
                let norm_row = em.values().row(i);
                prop_assert!(norm_row[raw_argmax] >= norm_row.iter().copied().fold(f64::MIN, f64::max) - 1e-12);
            }
        }
    }
}
