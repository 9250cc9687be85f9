//! Feedforward network trained on cost-weighted binary cross-entropy.
//!
//! Inputs are z-scored with statistics from the training rows only. Hidden
//! layers share one activation; the single output unit passes through a
//! sigmoid. For a batch of `B` rows with instance weights `w` the objective is
//!
//! ```text
//! L = (1/B) sum_i w_i [softplus(z_i) - y_i z_i] + (l2/2) sum ||W||^2
//! ```
//!
//! where `z_i` is the output pre-activation; biases are not regularised.
//!
//! Optimiser constants: Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
//! RMSprop uses rho = 0.9, eps = 1e-8; SGD has no momentum.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CladRecord, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::gbdt::check_case_schema;
use crate::{open_unit, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
    Rmsprop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// L2 strength on weights; 0 disables.
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_layers: vec![4, 4, 6, 8],
            activation: Activation::Relu,
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            batch_size: 8,
            epochs: 9,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.iter().any(|&w| w < 1) {
            return Err(Error::config("hidden_layers", "every width must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::config("l2", "must be >= 0"));
        }
        Ok(())
    }
}

/// Dense layer; `weights` is `n_out x n_in`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.biases[o];
            out.push(z);
        }
    }
}

/// Layer stack without input scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Same shapes as the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Network {
    /// Randomly initialised network: He-uniform for ReLU, Xavier-uniform
    /// otherwise and for the output layer; zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (n_in, n_out) = (widths[l], widths[l + 1]);
                let is_output = l + 1 == n_layers;
                let bound = if activation == Activation::Relu && !is_output {
                    (6.0 / n_in as f64).sqrt()
                } else {
                    (6.0 / (n_in + n_out) as f64).sqrt()
                };
                let mut layer = Layer::zeros(n_in, n_out);
                for w in &mut layer.weights {
                    *w = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Network { layers, activation }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    /// Output pre-activation (log-odds).
    pub fn logit(&self, input: &[f64]) -> f64 {
        let mut a = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut z);
            if l == last {
                return z[0];
            }
            a.clear();
            a.extend(z.iter().map(|&v| self.activation.apply(v)));
        }
        unreachable!("network has at least one layer")
    }

    pub fn predict(&self, input: &[f64]) -> f64 {
        sigmoid(self.logit(input))
    }

    /// Objective value on a batch of network inputs.
    pub fn loss(&self, inputs: &[&[f64]], labels: &[bool], weights: &[f64], l2: f64) -> f64 {
        let b = inputs.len() as f64;
        let data: f64 = inputs
            .iter()
            .zip(labels)
            .zip(weights)
            .map(|((x, &y), w)| {
                let z = self.logit(x);
                w * (softplus(z) - if y { z } else { 0.0 })
            })
            .sum::<f64>()
            / b;
        data + 0.5 * l2 * self.weight_sq_norm()
    }

    fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum()
    }

    /// Loss and its analytic gradient by backpropagation.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&[f64]],
        labels: &[bool],
        weights: &[f64],
        l2: f64,
    ) -> Result<(f64, Gradient)> {
        if inputs.is_empty() {
            return Err(Error::Empty("gradient needs a nonempty batch".into()));
        }
        if inputs.len() != labels.len() || inputs.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: labels.len().min(weights.len()),
            });
        }
        let n_in = self.n_inputs();
        if let Some(x) = inputs.iter().find(|x| x.len() != n_in) {
            return Err(Error::Schema(format!("network expects {n_in} inputs, got {}", x.len())));
        }

        let b = inputs.len() as f64;
        let mut grad = Gradient {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        };
        let n_layers = self.layers.len();
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut data_loss = 0.0;

        for ((x, &y), &w) in inputs.iter().zip(labels).zip(weights) {
            acts[0].clear();
            acts[0].extend_from_slice(x);
            for l in 0..n_layers {
                let (head, tail) = acts.split_at_mut(l + 1);
                self.layers[l].forward(&head[l], &mut pre[l]);
                let out = &mut tail[0];
                out.clear();
                if l + 1 == n_layers {
                    out.extend_from_slice(&pre[l]);
                } else {
                    out.extend(pre[l].iter().map(|&z| self.activation.apply(z)));
                }
            }
            let z = pre[n_layers - 1][0];
            let t = if y { 1.0 } else { 0.0 };
            data_loss += w * (softplus(z) - t * z);

            let mut delta = vec![w * (sigmoid(z) - t) / b];
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let g = &mut grad.layers[l];
                let input = &acts[l];
                for o in 0..layer.n_out {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * a;
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; layer.n_in];
                    for o in 0..layer.n_out {
                        let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (acc, wv) in next.iter_mut().zip(row) {
                            *acc += delta[o] * wv;
                        }
                    }
                    for (i, acc) in next.iter_mut().enumerate() {
                        *acc *= self.activation.derivative(pre[l - 1][i], acts[l][i]);
                    }
                    delta = next;
                }
            }
        }
        if l2 > 0.0 {
            for (g, layer) in grad.layers.iter_mut().zip(&self.layers) {
                for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
                    *gw += l2 * w;
                }
            }
        }
        let loss = data_loss / b + 0.5 * l2 * self.weight_sq_norm();
        Ok((loss, grad))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-feature z-score parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on every row of `x`. Constant features get unit scale.
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.n_rows.max(1) as f64;
        let mut mean = vec![0.0; x.n_cols];
        for i in 0..x.n_rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.n_cols];
        for i in 0..x.n_rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub network: Network,
    pub standardizer: Standardizer,
    pub schema: Vec<String>,
    pub params: MlpParams,
}

impl MlpModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.schema.len(),
                row.len()
            )));
        }
        Ok(open_unit(self.network.predict(&self.standardizer.transform(row))))
    }

    pub fn predict_record(&self, rec: &CladRecord) -> Result<f64> {
        check_case_schema(&self.schema)?;
        self.predict_proba(&rec.features())
    }
}

/// Gradient of the weighted objective on a batch of network inputs (already
/// standardised).
pub fn gradient(network: &Network, batch: &[&[f64]], labels: &[bool], weights: &[f64], l2: f64) -> Result<Gradient> {
    network
        .loss_and_gradient(batch, labels, weights, l2)
        .map(|(_, g)| g)
}

enum OptState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
    Rmsprop { s: Vec<f64> },
}

impl OptState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const RHO: f64 = 0.9;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            Optimizer::Rmsprop => OptState::Rmsprop { s: vec![0.0; n] },
        }
    }

    fn step(&mut self, net: &mut Network, grad: &[f64], lr: f64) {
        match self {
            OptState::Sgd => {
                for (p, g) in net.params_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - Self::BETA1.powi(*t);
                let c2 = 1.0 - Self::BETA2.powi(*t);
                for (k, (p, g)) in net.params_mut().zip(grad).enumerate() {
                    m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g;
                    v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g * g;
                    *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
                }
            }
            OptState::Rmsprop { s } => {
                for (k, (p, g)) in net.params_mut().zip(grad).enumerate() {
                    s[k] = Self::RHO * s[k] + (1.0 - Self::RHO) * g * g;
                    *p -= lr * g / (s[k].sqrt() + Self::EPS);
                }
            }
        }
    }
}

pub fn train_dataset(ds: &Dataset, params: &MlpParams, weights: &[f64]) -> Result<MlpModel> {
    let labels = ds.labels()?;
    train(&ds.feature_matrix(), &labels, weights, params, ds.schema.clone())
}

/// Mini-batch training. Shuffle order and initialisation derive from
/// `params.seed` only.
pub fn train(
    x: &FeatureMatrix,
    labels: &[bool],
    weights: &[f64],
    params: &MlpParams,
    schema: Vec<String>,
) -> Result<MlpModel> {
    params.validate()?;
    let n = x.n_rows;
    if n == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if labels.len() != n || weights.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len().min(weights.len()),
        });
    }
    if let Some(i) = x.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value in row {}", i / x.n_cols.max(1) + 1)));
    }

    let standardizer = Standardizer::fit(x);
    let inputs: Vec<Vec<f64>> = (0..n).map(|i| standardizer.transform(x.row(i))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut network = Network::init(x.n_cols, &params.hidden_layers, params.activation, &mut rng);
    let n_params = network.params_mut().count();
    let mut opt = OptState::new(params.optimizer, n_params);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<bool> = chunk.iter().map(|&i| labels[i]).collect();
            let ws: Vec<f64> = chunk.iter().map(|&i| weights[i]).collect();
            let (loss, grad) = network.loss_and_gradient(&batch, &ys, &ws, params.l2)?;
            let flat = grad.flatten();
            if !loss.is_finite() || flat.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("loss diverged in epoch {epoch}")));
            }
            opt.step(&mut network, &flat, params.learning_rate);
        }
        if network.params_mut().any(|p| !p.is_finite()) {
            return Err(Error::Training(format!("parameters diverged in epoch {epoch}")));
        }
    }

    Ok(MlpModel {
        network,
        standardizer,
        schema,
        params: params.clone(),
    })
}
