//! Naive Bayes with a Gaussian kernel density estimate per class and
//! feature.
//!
//! Training values are compressed to (value, count) pairs, which makes the
//! binary pixel features cheap to evaluate; the likelihood of a sample is
//! the product of its per-feature densities, evaluated in log space.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, class_priors, normalize_emissions, BaseClassifier, EmissionMatrix};
use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy)]
pub struct NaiveBayesOptions {
    /// Lower bound on every per-feature bandwidth; guards zero-variance
    /// (constant) features such as always-off pixels.
    pub bandwidth_floor: f64,
}

impl Default for NaiveBayesOptions {
    fn default() -> Self {
        NaiveBayesOptions {
            bandwidth_floor: 1e-3,
        }
    }
}

/// One-dimensional Gaussian KDE over a class's values for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureKde {
    /// Distinct training values with multiplicities, ascending.
    values: Vec<(f64, u32)>,
    bandwidth: f64,
    n: u32,
}

impl FeatureKde {
    fn fit(samples: &[f64], floor: f64) -> FeatureKde {
        let n = samples.len();
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<(f64, u32)> = Vec::new();
        for v in sorted {
            match values.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => values.push((v, 1)),
            }
        }
        // Normal-reference rule of thumb on the sample standard deviation.
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let bandwidth = (1.06 * variance.sqrt() * (n as f64).powf(-0.2)).max(floor);
        FeatureKde {
            values,
            bandwidth,
            n: n as u32,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let sum: f64 = self
            .values
            .iter()
            .map(|&(v, count)| count as f64 * (-(x - v) * (x - v) * inv).exp())
            .sum();
        sum.ln() - (self.n as f64).ln() - self.bandwidth.ln() - 0.5 * LN_2PI
    }
}

/// A fitted naive Bayes model: 26 x d kernel density estimates plus class
/// priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    kdes: Vec<Vec<FeatureKde>>,
    class_priors: [f64; ALPHABET],
    dimension: usize,
}

impl NaiveBayesModel {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn priors(&self) -> &[f64; ALPHABET] {
        &self.class_priors
    }

    /// Per-class log likelihoods `sum_f ln density_{C,f}(x_f)`, 26 x N.
    pub fn log_emission_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dimension, test.ncols())?;
        let columns: Vec<[f64; ALPHABET]> = (0..test.nrows())
            .into_par_iter()
            .map(|q| {
                let row = test.row(q);
                std::array::from_fn(|c| {
                    self.kdes[c]
                        .iter()
                        .zip(row)
                        .map(|(kde, &x)| kde.log_density(x))
                        .sum()
                })
            })
            .collect();
        let mut matrix = Array2::zeros((ALPHABET, test.nrows()));
        for (j, column) in columns.iter().enumerate() {
            for (i, &v) in column.iter().enumerate() {
                matrix[[i, j]] = v;
            }
        }
        Ok(matrix)
    }

    fn scores_from_logs(&self, logs: &Array2<f64>) -> Array2<f64> {
        let mut scores = logs.clone();
        for (c, mut row) in scores.rows_mut().into_iter().enumerate() {
            let lp = self.class_priors[c].ln();
            row.mapv_inplace(|v| v + lp);
        }
        scores
    }

    fn emissions_from_logs(&self, logs: &Array2<f64>) -> Result<EmissionMatrix> {
        // Per-column max shift before exponentiation: the 128-feature
        // products underflow f64 otherwise. Column scaling is transparent
        // to the decoder, which compares letters within a column.
        let mut raw = logs.clone();
        for mut column in raw.columns_mut() {
            let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                column.fill(0.0);
            } else {
                column.mapv_inplace(|v| (v - max).exp());
            }
        }
        normalize_emissions(&raw)
    }
}

impl BaseClassifier for NaiveBayesModel {
    fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.scores_from_logs(&self.log_emission_scores(test)?))
    }

    fn emissions(&self, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
        self.emissions_from_logs(&self.log_emission_scores(test)?)
    }

    fn scores_and_emissions(&self, test: &ArrayView2<f64>) -> Result<(Array2<f64>, EmissionMatrix)> {
        let logs = self.log_emission_scores(test)?;
        Ok((
            self.scores_from_logs(&logs),
            self.emissions_from_logs(&logs)?,
        ))
    }
}

/// Fits per-class, per-feature kernel densities and empirical class priors.
pub fn train_naive_bayes(
    train: &ArrayView2<f64>,
    train_labels: &[Letter],
    options: NaiveBayesOptions,
) -> Result<NaiveBayesModel> {
    if train.nrows() == 0 {
        return Err(Error::InvalidArgument("empty naive Bayes training set".into()));
    }
    check_dim(train.nrows(), train_labels.len())?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ALPHABET];
    for (i, l) in train_labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    if let Some(missing) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Model(format!(
            "class '{}' absent from training data",
            Letter::from_index(missing).unwrap()
        )));
    }
    let dimension = train.ncols();
    let kdes: Vec<Vec<FeatureKde>> = by_class
        .par_iter()
        .map(|rows| {
            (0..dimension)
                .map(|f| {
                    let samples: Vec<f64> = rows.iter().map(|&i| train[[i, f]]).collect();
                    FeatureKde::fit(&samples, options.bandwidth_floor)
                })
                .collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        kdes,
        class_priors: class_priors(train_labels),
        dimension,
    })
}

/// Likelihood-product emissions, exponentiated with a per-column max shift
/// and row-normalized.
pub fn nb_emissions(model: &NaiveBayesModel, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
    model.emissions_from_logs(&model.log_emission_scores(test)?)
}
