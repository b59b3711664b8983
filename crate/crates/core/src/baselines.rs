//! K-nearest-neighbour vote fractions and a linear hinge-loss SVM.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};
use crate::linear::{check_xy, LinearModel, LinearOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Array2<f64>,
    y: Vec<bool>,
    k: usize,
}

impl KnnModel {
    pub fn new(x: ArrayView2<'_, f64>, y: &[bool], cfg: KnnConfig) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Validation("KNN needs a non-empty training set".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if cfg.k == 0 || cfg.k > y.len() {
            return Err(Error::Validation(format!("k = {} with {} training rows", cfg.k, y.len())));
        }
        Ok(KnnModel {
            x: x.to_owned(),
            y: y.to_vec(),
            k: cfg.k,
        })
    }
}

impl Model for KnnModel {
    fn score(&self, q: ArrayView1<'_, f64>) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
        }
        let pos = d[..self.k].iter().filter(|(_, i)| self.y[*i]).count();
        pos as f64 / self.k as f64
    }
}

pub fn knn_score(train_x: ArrayView2<'_, f64>, train_y: &[bool], query: ArrayView1<'_, f64>, cfg: KnnConfig) -> Result<f64> {
    Ok(KnnModel::new(train_x, train_y, cfg)?.score(query))
}

/// KNN as a CV learner. `k` is clamped to the training size.
#[derive(Debug, Clone, Copy)]
pub struct Knn(pub KnnConfig);

impl Learner for Knn {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], _seed: u64) -> Result<Box<dyn Model>> {
        let k = self.0.k.min(y.len());
        Ok(Box::new(KnnModel::new(x, y, KnnConfig { k })?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 200,
            seed: 0,
        }
    }
}

/// (1/2)‖w‖² + C·Σ max(0, 1 − yᵢ(wᵀxᵢ + b)) with yᵢ ∈ {−1, +1}.
pub fn svm_objective(model: &LinearModel, x: ArrayView2<'_, f64>, y: &[bool], c: f64) -> f64 {
    let hinge: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(r, &yi)| {
            let s = if yi { 1.0 } else { -1.0 };
            (1.0 - s * model.margin(r)).max(0.0)
        })
        .sum();
    0.5 * model.weights.iter().map(|w| w * w).sum::<f64>() + c * hinge
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    pub model: LinearModel,
    /// Full-batch objective of the returned iterate at each epoch boundary.
    pub objective: Vec<f64>,
}

/// Stochastic subgradient descent with step 1/(λt), λ = 1/(nC), returning the
/// running average of the iterates. The intercept takes the same steps but is
/// not shrunk.
pub fn fit_linear_svm_traced(x: ArrayView2<'_, f64>, y: &[bool], cfg: &SvmConfig) -> Result<SvmFit> {
    check_xy(x, y)?;
    if !(cfg.c > 0.0) || cfg.epochs == 0 {
        return Err(Error::Validation(format!("invalid SVM config {cfg:?}")));
    }
    let n = y.len();
    let p = x.ncols();
    let lambda = 1.0 / (n as f64 * cfg.c);
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut avg = LinearModel::zeros(p, LinearOutput::Margin);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut objective = Vec::with_capacity(cfg.epochs);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let s = if y[i] { 1.0 } else { -1.0 };
            let row = x.row(i);
            let m = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            if s * m < 1.0 {
                for (v, a) in w.iter_mut().zip(row.iter()) {
                    *v += eta * s * a;
                }
                b += eta * s;
            }
            let k = 1.0 / t as f64;
            for (a, v) in avg.weights.iter_mut().zip(&w) {
                *a += k * (v - *a);
            }
            avg.intercept += k * (b - avg.intercept);
        }
        if !(avg.intercept.is_finite() && avg.weights.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence("SVM weights became non-finite".into()));
        }
        objective.push(svm_objective(&avg, x, y, cfg.c));
    }
    Ok(SvmFit { model: avg, objective })
}

pub fn fit_linear_svm(x: ArrayView2<'_, f64>, y: &[bool], cfg: &SvmConfig) -> Result<LinearModel> {
    Ok(fit_linear_svm_traced(x, y, cfg)?.model)
}

/// Linear SVM as a CV learner; the fit seed replaces `cfg.seed`.
#[derive(Debug, Clone)]
pub struct LinearSvm(pub SvmConfig);

impl Learner for LinearSvm {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        let cfg = SvmConfig { seed, ..self.0.clone() };
        Ok(Box::new(fit_linear_svm(x, y, &cfg)?))
    }
}
