//! One-vs-all neural networks trained with scaled conjugate gradient.
//!
//! 26 binary networks share one architecture: inputs -> tanh hidden layer ->
//! one logistic output. Batch training minimizes mean squared error; each
//! network stops early after `patience` consecutive epochs without a new
//! best validation error.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, normalize_emissions, BaseClassifier, EmissionMatrix};
use crate::error::{Error, Result};
use crate::letter::{Letter, ALPHABET};

#[derive(Debug, Clone, Copy)]
pub struct NetworkOptions {
    pub max_epochs: usize,
    /// Consecutive validation failures tolerated before stopping.
    pub patience: usize,
    /// Møller's sigma: step used to approximate second-order information.
    pub sigma: f64,
    /// Initial scale-parameter lambda.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            max_epochs: 1000,
            patience: 6,
            sigma: 5e-5,
            lambda: 5e-7,
            seed: 0,
        }
    }
}

/// One binary network: flat parameters `[w1 | b1 | w2 | b2]` with `w1`
/// stored row-major as hidden x inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Network {
    pub fn outputs(&self, inputs: &ArrayView2<f64>) -> Array1<f64> {
        forward(&self.params, self.input_dim, self.hidden, inputs)
    }
}

pub fn param_count(input_dim: usize, hidden: usize) -> usize {
    hidden * input_dim + hidden + hidden + 1
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward pass over a batch; returns the logistic outputs.
fn forward(params: &[f64], input_dim: usize, hidden: usize, inputs: &ArrayView2<f64>) -> Array1<f64> {
    let (w1, b1, w2, b2) = unpack(params, input_dim, hidden);
    let mut z1 = inputs.dot(&w1.t());
    for mut row in z1.rows_mut() {
        for (z, b) in row.iter_mut().zip(b1) {
            *z = (*z + b).tanh();
        }
    }
    let w2 = ndarray::ArrayView1::from(w2);
    let mut out = z1.dot(&w2);
    out.mapv_inplace(|z| sigmoid(z + b2));
    out
}

fn unpack(params: &[f64], input_dim: usize, hidden: usize) -> (ArrayView2<'_, f64>, &[f64], &[f64], f64) {
    let w1_len = hidden * input_dim;
    let w1 = ArrayView2::from_shape((hidden, input_dim), &params[..w1_len]).unwrap();
    let b1 = &params[w1_len..w1_len + hidden];
    let w2 = &params[w1_len + hidden..w1_len + 2 * hidden];
    let b2 = params[w1_len + 2 * hidden];
    (w1, b1, w2, b2)
}

/// Mean-squared-error objective of one binary network on a batch.
///
/// `eval` computes the loss alone (used by finite-difference checks);
/// `eval_grad` additionally returns the analytic gradient in the flat
/// parameter layout.
pub struct BatchObjective<'a> {
    inputs: ArrayView2<'a, f64>,
    targets: &'a [f64],
    hidden: usize,
}

impl<'a> BatchObjective<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, targets: &'a [f64], hidden: usize) -> Self {
        assert_eq!(inputs.nrows(), targets.len());
        assert!(hidden >= 1);
        BatchObjective {
            inputs,
            targets,
            hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(self.inputs.ncols(), self.hidden)
    }

    pub fn eval(&self, params: &[f64]) -> f64 {
        let out = forward(params, self.inputs.ncols(), self.hidden, &self.inputs);
        let n = self.targets.len() as f64;
        out.iter()
            .zip(self.targets)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            / n
    }

    pub fn eval_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let input_dim = self.inputs.ncols();
        let hidden = self.hidden;
        let (w1, b1, w2, b2) = unpack(params, input_dim, hidden);
        let n = self.targets.len();

        let mut h_act = self.inputs.dot(&w1.t());
        for mut row in h_act.rows_mut() {
            for (z, b) in row.iter_mut().zip(b1) {
                *z = (*z + b).tanh();
            }
        }
        let w2_view = ndarray::ArrayView1::from(w2);
        let mut out = h_act.dot(&w2_view);
        out.mapv_inplace(|z| sigmoid(z + b2));

        let loss = out
            .iter()
            .zip(self.targets)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            / n as f64;

        // dE/dz2 per sample.
        let mut delta_out = Array1::zeros(n);
        for i in 0..n {
            let o = out[i];
            delta_out[i] = 2.0 * (o - self.targets[i]) / n as f64 * o * (1.0 - o);
        }

        let grad_w2 = h_act.t().dot(&delta_out);
        let grad_b2 = delta_out.sum();

        // Backprop into the hidden layer.
        let mut delta_hidden = Array2::zeros((n, hidden));
        for i in 0..n {
            for j in 0..hidden {
                let h = h_act[[i, j]];
                delta_hidden[[i, j]] = delta_out[i] * w2[j] * (1.0 - h * h);
            }
        }
        let grad_w1 = delta_hidden.t().dot(&self.inputs);
        let grad_b1 = delta_hidden.sum_axis(ndarray::Axis(0));

        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend(grad_w1.iter());
        grad.extend(grad_b1.iter());
        grad.extend(grad_w2.iter());
        grad.push(grad_b2);
        (loss, grad)
    }
}

/// Uniform init in +-1/sqrt(fan-in) for each layer.
fn initial_params(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(param_count(input_dim, hidden));
    let scale1 = 1.0 / (input_dim as f64).sqrt();
    for _ in 0..hidden * input_dim + hidden {
        params.push(rng.gen_range(-scale1..scale1));
    }
    let scale2 = 1.0 / (hidden as f64).sqrt();
    for _ in 0..hidden + 1 {
        params.push(rng.gen_range(-scale2..scale2));
    }
    params
}

struct ScgOutcome {
    params: Vec<f64>,
    epochs: usize,
}

/// Scaled conjugate gradient minimization (Møller's algorithm).
///
/// `after_update` runs after every successful weight update and may stop
/// training (early stopping); it receives the current parameters.
fn scg_minimize(
    objective: &BatchObjective<'_>,
    mut params: Vec<f64>,
    options: &NetworkOptions,
    mut after_update: impl FnMut(&[f64]) -> bool,
) -> Result<ScgOutcome> {
    let dim = params.len();
    let (mut loss, grad) = objective.eval_grad(&params);
    if !loss.is_finite() {
        return Err(Error::Model("non-finite initial loss".into()));
    }
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut lambda = options.lambda;
    let mut lambda_bar = 0.0f64;
    let mut success = true;
    let mut delta = 0.0f64;
    let mut epochs = 0usize;

    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for k in 1..=options.max_epochs {
        epochs = k;
        let p_norm2 = norm2(&p);
        if !(p_norm2.is_finite() && p_norm2 > 0.0) {
            p.copy_from_slice(&r);
            if norm2(&p) == 0.0 {
                break;
            }
            continue;
        }

        if success {
            // Second-order information along p.
            let sigma_k = options.sigma / p_norm2.sqrt();
            let shifted: Vec<f64> = params.iter().zip(&p).map(|(w, pi)| w + sigma_k * pi).collect();
            let (_, grad_shifted) = objective.eval_grad(&shifted);
            delta = (0..dim)
                .map(|i| (grad_shifted[i] - (-r[i])) * p[i])
                .sum::<f64>()
                / sigma_k;
        }

        delta += (lambda - lambda_bar) * p_norm2;
        if delta <= 0.0 {
            // Make the Hessian approximation positive definite.
            lambda_bar = 2.0 * (lambda - delta / p_norm2);
            delta = -delta + lambda * p_norm2;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let candidate: Vec<f64> = params.iter().zip(&p).map(|(w, pi)| w + alpha * pi).collect();
        let loss_candidate = objective.eval(&candidate);
        let comparison = 2.0 * delta * (loss - loss_candidate) / (mu * mu);

        if !comparison.is_finite() {
            return Err(Error::Model("non-finite loss during training".into()));
        }

        if comparison >= 0.0 {
            params = candidate;
            loss = loss_candidate;
            let (_, grad_new) = objective.eval_grad(&params);
            let r_new: Vec<f64> = grad_new.iter().map(|g| -g).collect();
            lambda_bar = 0.0;
            success = true;
            if k % dim == 0 {
                p.copy_from_slice(&r_new);
            } else {
                let beta = (norm2(&r_new) - dot(&r_new, &r)) / mu;
                for i in 0..dim {
                    p[i] = r_new[i] + beta * p[i];
                }
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
            if after_update(&params) {
                break;
            }
            if norm2(&r) < 1e-20 {
                break;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }

        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p_norm2;
        }
        if !lambda.is_finite() || lambda > 1e250 {
            break;
        }
    }
    Ok(ScgOutcome { params, epochs })
}

/// Trains one binary network with early stopping on validation MSE.
/// Returns the network and the epoch count.
fn train_single_network(
    inputs: &ArrayView2<f64>,
    targets: &[f64],
    validation: &ArrayView2<f64>,
    validation_targets: &[f64],
    hidden: usize,
    options: &NetworkOptions,
    seed: u64,
) -> Result<(Network, usize)> {
    let input_dim = inputs.ncols();
    let objective = BatchObjective::new(inputs.view(), targets, hidden);
    let val_objective = (!validation_targets.is_empty())
        .then(|| BatchObjective::new(validation.view(), validation_targets, hidden));

    let mut attempt = 0;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt * 0x9e37_79b9));
        let start = initial_params(input_dim, hidden, &mut rng);

        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut failures = 0usize;
        let outcome = scg_minimize(&objective, start, options, |params| {
            let Some(val) = &val_objective else {
                return false;
            };
            let val_loss = val.eval(params);
            match &best {
                Some((best_loss, _)) if val_loss >= *best_loss => {
                    failures += 1;
                }
                _ => {
                    best = Some((val_loss, params.to_vec()));
                    failures = 0;
                }
            }
            failures >= options.patience
        });

        match outcome {
            Ok(out) => {
                let params = best.map(|(_, p)| p).unwrap_or(out.params);
                return Ok((
                    Network {
                        input_dim,
                        hidden,
                        params,
                    },
                    out.epochs,
                ));
            }
            Err(err) if attempt == 0 => {
                log::warn!("network training diverged ({err}); reinitializing once");
                attempt = 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// The 26 one-vs-all networks plus the mean epoch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OaaNetworkModel {
    pub hidden_nodes: usize,
    /// Mean training epochs across the 26 networks.
    pub training_epochs: f64,
    networks: Vec<Network>,
    input_dim: usize,
}

impl OaaNetworkModel {
    pub fn dimension(&self) -> usize {
        self.input_dim
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    /// Raw network outputs, 26 x N: row c is network c over all samples.
    pub fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.input_dim, test.ncols())?;
        let rows: Vec<Array1<f64>> = self
            .networks
            .par_iter()
            .map(|net| net.outputs(test))
            .collect();
        let mut scores = Array2::zeros((ALPHABET, test.nrows()));
        for (c, row) in rows.into_iter().enumerate() {
            scores.row_mut(c).assign(&row);
        }
        Ok(scores)
    }
}

impl BaseClassifier for OaaNetworkModel {
    fn decision_scores(&self, test: &ArrayView2<f64>) -> Result<Array2<f64>> {
        OaaNetworkModel::decision_scores(self, test)
    }

    fn emissions(&self, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
        nn_emissions(self, test)
    }
}

/// Trains the 26 one-vs-all networks (in parallel, independently seeded
/// from `options.seed`).
pub fn train_neural_oaa(
    train: &ArrayView2<f64>,
    train_labels: &[Letter],
    validation: &ArrayView2<f64>,
    validation_labels: &[Letter],
    hidden_nodes: usize,
    options: NetworkOptions,
) -> Result<OaaNetworkModel> {
    if hidden_nodes == 0 {
        return Err(Error::InvalidArgument("hidden_nodes must be >= 1".into()));
    }
    if train.nrows() == 0 {
        return Err(Error::InvalidArgument("empty network training set".into()));
    }
    check_dim(train.nrows(), train_labels.len())?;
    check_dim(validation.nrows(), validation_labels.len())?;
    if validation.nrows() > 0 {
        check_dim(train.ncols(), validation.ncols())?;
    }

    let one_vs_all = |labels: &[Letter], letter: usize| -> Vec<f64> {
        labels
            .iter()
            .map(|l| if l.index() == letter { 1.0 } else { 0.0 })
            .collect()
    };

    let results: Result<Vec<(Network, usize)>> = (0..ALPHABET)
        .into_par_iter()
        .map(|letter| {
            let targets = one_vs_all(train_labels, letter);
            let val_targets = one_vs_all(validation_labels, letter);
            train_single_network(
                train,
                &targets,
                validation,
                &val_targets,
                hidden_nodes,
                &options,
                options.seed.wrapping_add(letter as u64 * 0x51_7c_c1),
            )
        })
        .collect();
    let results = results?;
    let mean_epochs =
        results.iter().map(|(_, e)| *e as f64).sum::<f64>() / results.len() as f64;
    Ok(OaaNetworkModel {
        hidden_nodes,
        training_epochs: mean_epochs,
        networks: results.into_iter().map(|(net, _)| net).collect(),
        input_dim: train.ncols(),
    })
}

/// Network-output emissions: each row is one network's outputs, normalized
/// row-wise.
pub fn nn_emissions(model: &OaaNetworkModel, test: &ArrayView2<f64>) -> Result<EmissionMatrix> {
    let raw = model.decision_scores(test)?;
    normalize_emissions(&raw)
}
