//! Parzen window classifier: non-parametric class-conditional densities
//! with a bandwidth picked by halving a validation-error bracket.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, class_priors, normalize_emissions, BaseClassifier, EmissionMatrix};
use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

const LN_2PI: f64 = 1.8378770664093453;

/// Window function of the density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParzenKernel {
    /// Isotropic Gaussian with per-dimension width h.
    #[default]
    Gaussian,
    /// Uniform hypercube window with side h.
    Hypercube,
}

#[derive(Debug, Clone, Copy)]
pub struct ParzenOptions {
    /// Lower bracket edge; defaults to `1e-3 * h_hi`.
    pub h_lo: Option<f64>,
    /// Upper bracket edge; defaults to the largest per-feature range.
    pub h_hi: Option<f64>,
    pub kernel: ParzenKernel,
    /// Stop when the bracket width falls below this fraction of the initial
    /// upper edge.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ParzenOptions {
    fn default() -> Self {
        ParzenOptions {
            h_lo: None,
            h_hi: None,
            kernel: ParzenKernel::Gaussian,
            rel_tolerance: 1e-3,
            max_iterations: 40,
        }
    }
}

/// A fitted Parzen window model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParzenModel {
    pub bandwidth_h: f64,
    pub kernel: ParzenKernel,
    train: Array2<f64>,
    labels: Vec<Letter>,
    class_priors: [f64; ALPHABET],
    class_counts: [usize; ALPHABET],
}

impl ParzenModel {
    pub fn new(
        bandwidth_h: f64,
        kernel: ParzenKernel,
        train: Array2<f64>,
        labels: Vec<Letter>,
    ) -> Result<Self> {
        if bandwidth_h <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {bandwidth_h}"
            )));
        }
        check_dim(train.nrows(), labels.len())?;
        let class_priors = class_priors(&labels);
        let mut class_counts = [0usize; ALPHABET];
        for l in &labels {
            class_counts[l.index()] += 1;
        }
        Ok(ParzenModel {
            bandwidth_h,
            kernel,
            train,
            labels,
            class_priors,
            class_counts,
        })
    }

    pub fn dimension(&self) -> usize {
        self.train.ncols()
    }

    pub fn priors(&self) -> &[f64; ALPHABET] {
        &self.class_priors
    }

    /// Log class-conditional densities `ln P(x | C)` for each test row;
    /// result is 26 x N. Classes without training samples get -inf.
    pub fn log_densities(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dimension(), test.ncols())?;
        let columns: Vec<[f64; ALPHABET]> = (0..test.nrows())
            .into_par_iter()
            .map(|q| {
                self.column_log_densities(test.row(q).as_slice().unwrap(), self.bandwidth_h, None)
            })
            .collect();
        Ok(columns_to_matrix(&columns))
    }

    /// Log densities over the training block, excluding each point from its
    /// own kernel sum.
    fn self_log_densities(&self) -> Array2<f64> {
        let columns: Vec<[f64; ALPHABET]> = (0..self.train.nrows())
            .into_par_iter()
            .map(|q| {
                self.column_log_densities(
                    self.train.row(q).as_slice().unwrap(),
                    self.bandwidth_h,
                    Some(q),
                )
            })
            .collect();
        columns_to_matrix(&columns)
    }

    fn column_log_densities(&self, query: &[f64], h: f64, skip: Option<usize>) -> [f64; ALPHABET] {
        let mut skipped = [0usize; ALPHABET];
        if let Some(i) = skip {
            skipped[self.labels[i].index()] = 1;
        }
        let dim = self.dimension() as f64;
        match self.kernel {
            ParzenKernel::Gaussian => {
                // Streaming log-sum-exp of -d^2 / (2 h^2) per class.
                let mut max = [f64::NEG_INFINITY; ALPHABET];
                let mut sum = [0.0f64; ALPHABET];
                let inv = 1.0 / (2.0 * h * h);
                for (i, row) in self.train.rows().into_iter().enumerate() {
                    if Some(i) == skip {
                        continue;
                    }
                    let e = -super::squared_distance(row.as_slice().unwrap(), query) * inv;
                    let c = self.labels[i].index();
                    if e > max[c] {
                        sum[c] = sum[c] * (max[c] - e).exp() + 1.0;
                        max[c] = e;
                    } else {
                        sum[c] += (e - max[c]).exp();
                    }
                }
                std::array::from_fn(|c| {
                    let n = self.class_counts[c] - skipped[c];
                    if n == 0 || max[c] == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        max[c] + sum[c].ln()
                            - (n as f64).ln()
                            - dim * h.ln()
                            - dim / 2.0 * LN_2PI
                    }
                })
            }
            ParzenKernel::Hypercube => {
                let half = h / 2.0;
                let mut inside = [0usize; ALPHABET];
                for (i, row) in self.train.rows().into_iter().enumerate() {
                    if Some(i) == skip {
                        continue;
                    }
                    let contained = row
                        .as_slice()
                        .unwrap()
                        .iter()
                        .zip(query)
                        .all(|(t, q)| (t - q).abs() <= half);
                    if contained {
                        inside[self.labels[i].index()] += 1;
                    }
                }
                std::array::from_fn(|c| {
                    let n = self.class_counts[c] - skipped[c];
                    if n == 0 || inside[c] == 0 {
                        f64::NEG_INFINITY
                    } else {
                        (inside[c] as f64).ln() - (n as f64).ln() - dim * h.ln()
                    }
                })
            }
        }
    }

    /// Per-sample class posteriors `P(C | x)`, each column summing to 1.
    pub fn posteriors(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut logs = self.log_densities(test)?;
        for (c, mut row) in logs.rows_mut().into_iter().enumerate() {
            let lp = self.class_priors[c].ln();
            row.mapv_inplace(|v| v + lp);
        }
        for mut column in logs.columns_mut() {
            let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                column.fill(1.0 / ALPHABET as f64);
                continue;
            }
            column.mapv_inplace(|v| (v - max).exp());
            let sum = column.sum();
            column.mapv_inplace(|v| v / sum);
        }
        Ok(logs)
    }

    fn scores_from_log_densities(&self, logs: &Array2<f64>) -> Array2<f64> {
        let mut scores = logs.clone();
        for (c, mut row) in scores.rows_mut().into_iter().enumerate() {
            let lp = self.class_priors[c].ln();
            row.mapv_inplace(|v| v + lp);
        }
        scores
    }

    fn emissions_from_log_densities(&self, logs: &Array2<f64>) -> Result<EmissionMatrix> {
        // Densities can overflow f64 for tiny bandwidths (the 1/h^d factor);
        // a global shift keeps proportions and the normalized rows intact.
        let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if max_log > 700.0 { max_log - 700.0 } else { 0.0 };
        let mut raw = logs.mapv(|v| (v - shift).exp());
        let mut fallback_columns = 0usize;
        for mut column in raw.columns_mut() {
            if column.iter().all(|&v| v == 0.0) {
                for (c, v) in column.iter_mut().enumerate() {
                    *v = self.class_priors[c];
                }
                fallback_columns += 1;
            }
        }
        if fallback_columns > 0 {
            log::warn!(
                "parzen emissions underflowed for {fallback_columns} columns; fell back to class priors"
            );
        }
        normalize_emissions(&raw)
    }
}

impl BaseClassifier for ParzenModel {
    fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.scores_from_log_densities(&self.log_densities(test)?))
    }

    fn train_scores(&self, train: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.train.nrows(), train.nrows())?;
        Ok(self.scores_from_log_densities(&self.self_log_densities()))
    }

    fn emissions(&self, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
        self.emissions_from_log_densities(&self.log_densities(test)?)
    }

    fn scores_and_emissions(&self, test: &ArrayView2<f64>) -> Result<(Array2<f64>, EmissionMatrix)> {
        let logs = self.log_densities(test)?;
        Ok((
            self.scores_from_log_densities(&logs),
            self.emissions_from_log_densities(&logs)?,
        ))
    }
}

/// Class-conditional density emissions `P(x | C)`, row-normalized, with a
/// class-prior fallback for columns that underflow to zero.
pub fn parzen_emissions(model: &ParzenModel, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
    model.emissions_from_log_densities(&model.log_densities(test)?)
}

/// Picks the bandwidth by repeatedly halving a validation-error bracket.
///
/// The search holds five points (edges, midpoint, quarter points); each
/// iteration keeps the half-bracket around the smallest observed error and
/// stops when the bracket is narrower than `rel_tolerance * h_hi` or after
/// `max_iterations` halvings. The best-observed h wins; ties prefer the
/// smaller bandwidth, so a monotone error run returns the bracket floor.
pub fn train_parzen(
    train: &ArrayView2<f64>,
    train_labels: &[Letter],
    validation: &ArrayView2<f64>,
    validation_labels: &[Letter],
    options: ParzenOptions,
) -> Result<ParzenModel> {
    if train.nrows() == 0 {
        return Err(Error::InvalidArgument("empty Parzen training set".into()));
    }
    check_dim(train.nrows(), train_labels.len())?;

    let h_hi = options.h_hi.unwrap_or_else(|| {
        let mut widest = 0.0f64;
        for column in train.columns() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in column {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            widest = widest.max(hi - lo);
        }
        if widest > 0.0 {
            widest
        } else {
            1.0
        }
    });
    let h_lo = options.h_lo.unwrap_or(1e-3 * h_hi);
    if !(h_lo > 0.0 && h_hi > h_lo) {
        return Err(Error::InvalidArgument(format!(
            "bad bandwidth bracket [{h_lo}, {h_hi}]"
        )));
    }

    if validation.nrows() == 0 {
        log::warn!("empty validation set: keeping the upper-bracket bandwidth {h_hi}");
        return ParzenModel::new(h_hi, options.kernel, train.to_owned(), train_labels.to_vec());
    }
    check_dim(train.ncols(), validation.ncols())?;
    check_dim(validation.nrows(), validation_labels.len())?;

    let probe = ParzenModel::new(1.0, options.kernel, train.to_owned(), train_labels.to_vec())?;
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let mut evaluations = 0usize;
    let mut eval = |h: f64| -> f64 {
        *memo.entry(h.to_bits()).or_insert_with(|| {
            evaluations += 1;
            validation_error(&probe, validation, validation_labels, h)
        })
    };

    let (mut lo, mut hi) = (h_lo, h_hi);
    let mut mid = 0.5 * (lo + hi);
    eval(lo);
    eval(mid);
    eval(hi);
    let mut iterations = 0;
    while hi - lo >= options.rel_tolerance * h_hi && iterations < options.max_iterations {
        let q1 = 0.5 * (lo + mid);
        let q3 = 0.5 * (mid + hi);
        let points = [lo, q1, mid, q3, hi];
        let errors = points.map(&mut eval);
        let best = (0..5)
            .min_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)))
            .unwrap();
        match best {
            0 | 1 => {
                hi = mid;
                mid = q1;
            }
            2 => {
                lo = q1;
                hi = q3;
            }
            _ => {
                lo = mid;
                mid = q3;
            }
        }
        iterations += 1;
    }

    let best_h = memo
        .iter()
        .map(|(&bits, &err)| (f64::from_bits(bits), err))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .map(|(h, _)| h)
        .expect("bracket endpoints were evaluated");
    log::info!(
        "parzen bandwidth search: {evaluations} evaluations over [{h_lo}, {h_hi}], chose h = {best_h}"
    );
    ParzenModel::new(best_h, options.kernel, train.to_owned(), train_labels.to_vec())
}

/// Misclassification rate of the posterior argmax on the validation block.
fn validation_error(
    probe: &ParzenModel,
    validation: &ArrayView2<f64>,
    validation_labels: &[Letter],
    h: f64,
) -> f64 {
    let wrong: usize = (0..validation.nrows())
        .into_par_iter()
        .map(|q| {
            let logs =
                probe.column_log_densities(validation.row(q).as_slice().unwrap(), h, None);
            let mut best = 0usize;
            for c in 1..ALPHABET {
                let score = logs[c] + probe.class_priors[c].ln();
                if score > logs[best] + probe.class_priors[best].ln() {
                    best = c;
                }
            }
            usize::from(best != validation_labels[q].index())
        })
        .sum();
    wrong as f64 / validation.nrows() as f64
}

fn columns_to_matrix(columns: &[[f64; ALPHABET]]) -> Array2<f64> {
    let mut matrix = Array2::zeros((ALPHABET, columns.len()));
    for (j, column) in columns.iter().enumerate() {
        for (i, &v) in column.iter().enumerate() {
            matrix[[i, j]] = v;
        }
    }
    matrix
}
