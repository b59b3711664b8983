//! Feed-forward binary classifier: ReLU hidden layers, sigmoid output,
//! full-batch gradient descent on cross-entropy with an L2 weight penalty.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};
use crate::linear::{check_xy, sigmoid, softplus};

/// Layer widths from input to the single output unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub layer_sizes: Vec<usize>,
}

impl MlpArch {
    pub fn new(input: usize, hidden: &[usize]) -> Result<Self> {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let arch = MlpArch { layer_sizes };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 3 || s.contains(&0) || s.last() != Some(&1) {
            return Err(Error::Validation(format!(
                "architecture {s:?} needs an input, at least one hidden layer and one output unit"
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: MlpArch,
    /// `weights[l]` has shape (out, in).
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MlpJson {
    arch: MlpArch,
    params: Vec<f64>,
}

impl Serialize for MlpModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpJson {
            arch: self.arch.clone(),
            params: flatten_weights(self),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MlpJson::deserialize(d)?;
        unflatten_weights(&j.arch, &j.params).map_err(serde::de::Error::custom)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(arch: &MlpArch, seed: u64) -> Result<MlpModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in arch.layer_sizes.windows(2) {
        let r = (6.0 / (w[0] + w[1]) as f64).sqrt();
        weights.push(Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-r..=r)));
        biases.push(Array1::zeros(w[1]));
    }
    Ok(MlpModel {
        arch: arch.clone(),
        weights,
        biases,
    })
}

/// Layer by layer: weights row-major, then biases.
pub fn flatten_weights(model: &MlpModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.arch.n_params());
    for (w, b) in model.weights.iter().zip(&model.biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

pub fn unflatten_weights(arch: &MlpArch, v: &[f64]) -> Result<MlpModel> {
    arch.validate()?;
    if v.len() != arch.n_params() {
        return Err(Error::Validation(format!(
            "{} parameters given, architecture {:?} has {}",
            v.len(),
            arch.layer_sizes,
            arch.n_params()
        )));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut at = 0;
    for w in arch.layer_sizes.windows(2) {
        let k = w[0] * w[1];
        weights.push(Array2::from_shape_vec((w[1], w[0]), v[at..at + k].to_vec()).expect("shape checked"));
        at += k;
        biases.push(Array1::from(v[at..at + w[1]].to_vec()));
        at += w[1];
    }
    Ok(MlpModel {
        arch: arch.clone(),
        weights,
        biases,
    })
}

impl MlpModel {
    /// Output-unit pre-activations for every row.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(&w.t()) + b;
            if l < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a.index_axis_move(Axis(1), 0)
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.logits(x.insert_axis(Axis(0)))[0])
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.logits(x).iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum()
    }
}

impl Model for MlpModel {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.forward(x)
    }

    fn score_rows(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.predict_proba(x)
    }
}

/// Mean cross-entropy + (l2/2)·Σ‖W‖² (biases unpenalized).
pub fn mlp_loss(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[bool], l2: f64) -> f64 {
    let z = model.logits(x);
    let ce: f64 = z.iter().zip(y).map(|(&z, &l)| if l { softplus(-z) } else { softplus(z) }).sum::<f64>() / y.len() as f64;
    ce + 0.5 * l2 * model.weight_norm_sq()
}

/// Gradient of [`mlp_loss`] in [`flatten_weights`] order.
pub fn mlp_gradient(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[bool], l2: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let last = model.weights.len() - 1;
    // activations[0] = x; pre[l] = pre-activation of layer l
    let mut acts = vec![x.to_owned()];
    let mut pre = Vec::new();
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let z = acts[l].dot(&w.t()) + b;
        let a = if l < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
        pre.push(z);
        acts.push(a);
    }
    let mut delta = pre[last].clone();
    for (d, &l) in delta.iter_mut().zip(y) {
        *d = (sigmoid(*d) - if l { 1.0 } else { 0.0 }) / n;
    }
    let mut grads_w = vec![Array2::zeros((0, 0)); model.weights.len()];
    let mut grads_b = vec![Array1::zeros(0); model.weights.len()];
    for l in (0..=last).rev() {
        grads_w[l] = delta.t().dot(&acts[l]) + &(&model.weights[l] * l2);
        grads_b[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l]);
            back.zip_mut_with(&pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            delta = back;
        }
    }
    let mut out = Vec::with_capacity(model.arch.n_params());
    for (w, b) in grads_w.iter().zip(&grads_b) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackpropConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for BackpropConfig {
    fn default() -> Self {
        BackpropConfig {
            learning_rate: 0.001,
            epochs: 1000,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

/// Returns the model and the training loss before each epoch plus the final one.
pub fn fit_backprop_traced(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    arch: &MlpArch,
    cfg: &BackpropConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    check_xy(x, y)?;
    if arch.input_size() != x.ncols() {
        return Err(Error::Validation(format!(
            "architecture expects {} inputs, data has {}",
            arch.input_size(),
            x.ncols()
        )));
    }
    if !(cfg.learning_rate > 0.0) || cfg.l2_lambda < 0.0 {
        return Err(Error::Validation(format!("invalid backprop config {cfg:?}")));
    }
    let model = init_mlp(arch, cfg.seed)?;
    let mut params = flatten_weights(&model);
    let mut model = model;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let loss = mlp_loss(&model, x, y, cfg.l2_lambda);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "MLP loss became {loss} at epoch {epoch}; try a smaller learning rate"
            )));
        }
        trace.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        let g = mlp_gradient(&model, x, y, cfg.l2_lambda);
        for (p, gi) in params.iter_mut().zip(&g) {
            *p -= cfg.learning_rate * gi;
        }
        model = unflatten_weights(arch, &params)?;
    }
    Ok((model, trace))
}

pub fn fit_backprop(x: ArrayView2<'_, f64>, y: &[bool], arch: &MlpArch, cfg: &BackpropConfig) -> Result<MlpModel> {
    Ok(fit_backprop_traced(x, y, arch, cfg)?.0)
}

/// Backprop MLP as a CV learner. The input width comes from the data.
#[derive(Debug, Clone)]
pub struct MlpLearner {
    pub hidden: Vec<usize>,
    pub cfg: BackpropConfig,
}

impl Learner for MlpLearner {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        let arch = MlpArch::new(x.ncols(), &self.hidden)?;
        let cfg = BackpropConfig { seed, ..self.cfg.clone() };
        Ok(Box::new(fit_backprop(x, y, &arch, &cfg)?))
    }
}
