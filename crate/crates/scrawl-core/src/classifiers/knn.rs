//! k-nearest-neighbor classifier with a descending validation search for k.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, classify_argmax, normalize_emissions, BaseClassifier, EmissionMatrix};
use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

#[derive(Debug, Clone, Copy)]
pub struct KnnOptions {
    /// Largest neighbor count tried by the validation search.
    pub k_max: usize,
    /// Stop the search once validation error has increased this many times.
    pub patience: usize,
}

impl Default for KnnOptions {
    fn default() -> Self {
        KnnOptions {
            k_max: 18,
            patience: 6,
        }
    }
}

/// A fitted kNN model: the training block plus the selected k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    train: Array2<f64>,
    labels: Vec<Letter>,
}

impl KnnModel {
    pub fn new(k: usize, train: Array2<f64>, labels: Vec<Letter>) -> Result<Self> {
        if train.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: train.nrows(),
                actual: labels.len(),
            });
        }
        if k == 0 || k > train.nrows() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} outside 1..={}",
                train.nrows()
            )));
        }
        Ok(KnnModel { k, train, labels })
    }

    pub fn train_len(&self) -> usize {
        self.train.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.train.ncols()
    }

    /// Neighbor-count scores (counts / k) for each test column.
    pub fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dimension(), test.ncols())?;
        Ok(self.count_scores(test, None))
    }

    /// Scores on the training block itself, excluding each query point from
    /// its own neighbor list.
    pub fn resubstitution_scores(&self) -> Array2<f64> {
        self.count_scores(&self.train.view(), Some(()))
    }

    fn count_scores(&self, queries: &ArrayView2<f64>, exclude_self: Option<()>) -> Array2<f64> {
        let k = if exclude_self.is_some() {
            self.k.min(self.train_len().saturating_sub(1)).max(1)
        } else {
            self.k
        };
        let columns: Vec<[f64; ALPHABET]> = (0..queries.nrows())
            .into_par_iter()
            .map(|q| {
                let skip = exclude_self.map(|_| q);
                let neighbors = k_nearest(&self.train.view(), queries.row(q).as_slice().unwrap(), k, skip);
                let mut counts = [0.0; ALPHABET];
                for &(_, index) in &neighbors {
                    counts[self.labels[index].index()] += 1.0;
                }
                for c in &mut counts {
                    *c /= k as f64;
                }
                counts
            })
            .collect();
        let mut scores = Array2::zeros((ALPHABET, queries.nrows()));
        for (j, column) in columns.iter().enumerate() {
            for (i, &v) in column.iter().enumerate() {
                scores[[i, j]] = v;
            }
        }
        scores
    }
}

impl BaseClassifier for KnnModel {
    fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        KnnModel::decision_scores(self, test)
    }

    fn train_scores(&self, train: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.train_len(), train.nrows())?;
        Ok(self.resubstitution_scores())
    }

    fn emissions(&self, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
        knn_emissions(self, test)
    }
}

/// The k nearest training rows to `query` as (squared distance, index),
/// ascending; ties broken by the lower training index.
fn k_nearest(
    train: &ArrayView2<f64>,
    query: &[f64],
    k: usize,
    skip: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut distances: Vec<(f64, usize)> = (0..train.nrows())
        .filter(|&i| Some(i) != skip)
        .map(|i| {
            (
                super::squared_distance(train.row(i).as_slice().unwrap(), query),
                i,
            )
        })
        .collect();
    let k = k.min(distances.len());
    let compare =
        |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < distances.len() {
        distances.select_nth_unstable_by(k - 1, compare);
        distances.truncate(k);
    }
    distances.sort_unstable_by(compare);
    distances
}

/// Outcome of the descending k search.
#[derive(Debug, Clone)]
pub struct KSearch {
    pub chosen: usize,
    /// (k, validation error) pairs actually evaluated, in search order.
    pub evaluated: Vec<(usize, f64)>,
}

/// Walks (k, error) pairs in descending-k order, stopping once error has
/// increased `patience` times over the previously evaluated k; picks the
/// minimum-error k, preferring the smaller k on ties.
pub(crate) fn select_k(
    errors: impl Iterator<Item = (usize, f64)>,
    patience: usize,
) -> KSearch {
    let mut evaluated: Vec<(usize, f64)> = Vec::new();
    let mut increases = 0usize;
    for (k, error) in errors {
        if let Some(&(_, previous)) = evaluated.last() {
            if error > previous {
                increases += 1;
            }
        }
        evaluated.push((k, error));
        if increases >= patience {
            break;
        }
    }
    let chosen = evaluated
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .unwrap_or(1);
    KSearch { chosen, evaluated }
}

/// Selects k by descending validation search and returns the fitted model.
///
/// Starting from `k_max`, the validation error is evaluated for each k; the
/// search stops early once the error has increased `patience` times, and the
/// minimum-error k wins (smallest k on ties). An empty validation set falls
/// back to k = 1 with a warning.
pub fn train_knn(
    train: &ArrayView2<f64>,
    train_labels: &[Letter],
    validation: &ArrayView2<f64>,
    validation_labels: &[Letter],
    options: KnnOptions,
) -> Result<KnnModel> {
    if train.nrows() == 0 {
        return Err(Error::InvalidArgument("empty kNN training set".into()));
    }
    check_dim(train.nrows(), train_labels.len())?;
    if validation.nrows() == 0 {
        log::warn!("empty validation set: falling back to k = 1");
        return KnnModel::new(1, train.to_owned(), train_labels.to_vec());
    }
    check_dim(train.ncols(), validation.ncols())?;
    check_dim(validation.nrows(), validation_labels.len())?;

    let k_max = options.k_max.clamp(1, train.nrows());

    // One neighbor pass per validation sample covers every k <= k_max:
    // predictions for each k come from prefixes of the sorted neighbor list.
    let predictions: Vec<Vec<Letter>> = (0..validation.nrows())
        .into_par_iter()
        .map(|q| {
            let neighbors = k_nearest(
                train,
                validation.row(q).as_slice().unwrap(),
                k_max,
                None,
            );
            let mut counts = [0u32; ALPHABET];
            let mut by_k = Vec::with_capacity(k_max);
            for &(_, index) in &neighbors {
                counts[train_labels[index].index()] += 1;
                let best = (0..ALPHABET).reduce(|a, b| if counts[b] > counts[a] { b } else { a });
                by_k.push(Letter::from_index(best.unwrap()).unwrap());
            }
            by_k
        })
        .collect();

    let error_at = |k: usize| {
        let wrong = predictions
            .iter()
            .zip(validation_labels)
            .filter(|(by_k, truth)| by_k[k - 1] != **truth)
            .count();
        wrong as f64 / validation_labels.len() as f64
    };
    let search = select_k((1..=k_max).rev().map(|k| (k, error_at(k))), options.patience);
    log::info!(
        "kNN search evaluated {} values of k, chose k = {}",
        search.evaluated.len(),
        search.chosen
    );
    KnnModel::new(search.chosen, train.to_owned(), train_labels.to_vec())
}

/// Neighbor-count emissions, row-normalized.
pub fn knn_emissions(model: &KnnModel, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
    let raw = model.decision_scores(test)?;
    normalize_emissions(&raw)
}

/// Hard predictions from the neighbor counts (mode of the neighbor letters,
/// ties toward the lower letter).
pub fn knn_predict(model: &KnnModel, test: &ArrayView2<f64>) -> Result<Vec<Letter>> {
    Ok(classify_argmax(&model.decision_scores(test)?.view()))
}
