//! Logistic regression fitted by elastic-net SGD or by IRLS with L1
//! coordinate descent, plus weight ranking.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};

/// Case-weight floor for IRLS.
pub const IRLS_WEIGHT_FLOOR: f64 = 1e-8;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else if z.is_nan() {
        z
    } else {
        0.0
    }
}

/// How a linear model's raw margin is turned into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearOutput {
    /// Sigmoid of the margin, thresholded at 0.5.
    Probability,
    /// The margin itself, thresholded at 0.
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub output: LinearOutput,
}

impl LinearModel {
    pub fn zeros(p: usize, output: LinearOutput) -> Self {
        LinearModel {
            weights: vec![0.0; p],
            intercept: 0.0,
            output,
        }
    }

    pub fn margin(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Divergence(format!("{what}: non-finite weights; try a smaller learning rate")))
        }
    }
}

impl Model for LinearModel {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.output {
            LinearOutput::Probability => sigmoid(self.margin(x)),
            LinearOutput::Margin => self.margin(x),
        }
    }

    fn decision_threshold(&self) -> f64 {
        match self.output {
            LinearOutput::Probability => 0.5,
            LinearOutput::Margin => 0.0,
        }
    }
}

/// Mean logistic loss of `model`'s margin.
pub fn mean_log_loss(model: &LinearModel, x: ArrayView2<'_, f64>, y: &[bool]) -> f64 {
    let total: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(r, &yi)| {
            let m = model.margin(r);
            if yi {
                softplus(-m)
            } else {
                softplus(m)
            }
        })
        .sum();
    total / y.len() as f64
}

pub(crate) fn check_xy(x: ArrayView2<'_, f64>, y: &[bool]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Validation(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::Validation("no training rows".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature matrix contains non-finite values".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            lambda: 0.01,
            alpha: 0.95,
            learning_rate: 0.01,
            epochs: 100,
            seed: 0,
        }
    }
}

/// Per-sample SGD on mean log-loss + λ[α‖w‖₁ + (1−α)/2‖w‖²]. The L1 part is
/// applied as a soft-threshold after each step.
pub fn fit_sgd_elasticnet(x: ArrayView2<'_, f64>, y: &[bool], cfg: &ElasticNetConfig) -> Result<LinearModel> {
    check_xy(x, y)?;
    if !(0.0..=1.0).contains(&cfg.alpha) || cfg.lambda < 0.0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Validation(format!("invalid elastic-net config {cfg:?}")));
    }
    let mut model = LinearModel::zeros(x.ncols(), LinearOutput::Probability);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let lr = cfg.learning_rate;
    let l2 = cfg.lambda * (1.0 - cfg.alpha);
    let l1 = lr * cfg.lambda * cfg.alpha;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = x.row(i);
            let p = sigmoid(model.margin(row));
            let g = p - if y[i] { 1.0 } else { 0.0 };
            for (w, &xv) in model.weights.iter_mut().zip(row.iter()) {
                *w = soft_threshold(*w - lr * (g * xv + l2 * *w), l1);
            }
            model.intercept -= lr * g;
        }
        let loss = mean_log_loss(&model, x, y);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "log-loss became {loss} with learning rate {lr}; try a smaller learning rate"
            )));
        }
    }
    model.check_finite("elastic-net SGD")?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlsConfig {
    pub lambda: f64,
    pub max_outer_iters: usize,
    pub coord_tol: f64,
    pub max_inner_sweeps: usize,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            lambda: 0.01,
            max_outer_iters: 100,
            coord_tol: 1e-8,
            max_inner_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsFit {
    pub model: LinearModel,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized objective after each accepted outer step, starting at zero weights.
    pub objective: Vec<f64>,
}

/// Mean log-loss + λ‖w‖₁.
pub fn irls_objective(model: &LinearModel, x: ArrayView2<'_, f64>, y: &[bool], lambda: f64) -> f64 {
    mean_log_loss(model, x, y) + lambda * model.weights.iter().map(|w| w.abs()).sum::<f64>()
}

/// Cyclic coordinate descent on (1/2n)Σ wᵢ(zᵢ − b − xᵢβ)² + λ‖β‖₁, warm-started
/// at `start`. `xt` holds the features column by column. After each full
/// sweep the nonzero coordinates are cycled alone until they settle.
fn weighted_lasso(
    xt: ArrayView2<'_, f64>,
    w: &[f64],
    z: &[f64],
    lambda: f64,
    start: &LinearModel,
    tol: f64,
    max_sweeps: usize,
) -> LinearModel {
    let n = z.len() as f64;
    let p = xt.nrows();
    let mut beta = start.weights.clone();
    let mut b = start.intercept;
    let mut resid: Vec<f64> = z.iter().map(|zi| zi - b).collect();
    for (j, &bj) in beta.iter().enumerate() {
        if bj != 0.0 {
            for (r, a) in resid.iter_mut().zip(xt.row(j)) {
                *r -= a * bj;
            }
        }
    }
    let wsum: f64 = w.iter().sum();
    let denom: Vec<f64> = (0..p)
        .map(|j| xt.row(j).iter().zip(w).map(|(a, wi)| wi * a * a).sum::<f64>() / n)
        .collect();
    let sweep = |coords: &mut dyn Iterator<Item = usize>, beta: &mut [f64], b: &mut f64, resid: &mut [f64]| {
        let shift = resid.iter().zip(w).map(|(r, wi)| r * wi).sum::<f64>() / wsum;
        *b += shift;
        resid.iter_mut().for_each(|r| *r -= shift);
        let mut max_change = shift.abs();
        for j in coords {
            if denom[j] == 0.0 {
                continue;
            }
            let col = xt.row(j);
            let col = col.as_slice().expect("column-major copy");
            let rho = col
                .iter()
                .zip(resid.iter())
                .zip(w)
                .map(|((a, r), wi)| wi * a * (r + a * beta[j]))
                .sum::<f64>()
                / n;
            let new = soft_threshold(rho, lambda) / denom[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        if sweep(&mut (0..p), &mut beta, &mut b, &mut resid) < tol {
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        while sweeps < max_sweeps {
            sweeps += 1;
            if sweep(&mut active.iter().copied(), &mut beta, &mut b, &mut resid) < tol {
                break;
            }
        }
    }
    LinearModel {
        weights: beta,
        intercept: b,
        output: LinearOutput::Probability,
    }
}

/// L1 logistic regression by iteratively reweighted least squares.
///
/// Each outer step solves the weighted lasso around the current iterate and
/// halves the step until the penalized objective does not increase.
pub fn fit_irls_l1(x: ArrayView2<'_, f64>, y: &[bool], cfg: &IrlsConfig) -> Result<IrlsFit> {
    check_xy(x, y)?;
    if cfg.lambda < 0.0 || cfg.coord_tol <= 0.0 {
        return Err(Error::Validation(format!("invalid IRLS config {cfg:?}")));
    }
    let n = y.len();
    let yv: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut cur = LinearModel::zeros(x.ncols(), LinearOutput::Probability);
    let mut cur_obj = irls_objective(&cur, x, y, cfg.lambda);
    let mut objective = vec![cur_obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let xt = x.t().as_standard_layout().into_owned();
    for _ in 0..cfg.max_outer_iters {
        iterations += 1;
        for i in 0..n {
            let eta = cur.margin(x.row(i));
            let p = sigmoid(eta);
            w[i] = (p * (1.0 - p)).max(IRLS_WEIGHT_FLOOR);
            z[i] = eta + (yv[i] - p) / w[i];
        }
        let proposal = weighted_lasso(xt.view(), &w, &z, cfg.lambda, &cur, cfg.coord_tol * 0.1, cfg.max_inner_sweeps);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = LinearModel {
                weights: cur
                    .weights
                    .iter()
                    .zip(&proposal.weights)
                    .map(|(a, b)| if step == 1.0 { *b } else { a + step * (b - a) })
                    .collect(),
                intercept: cur.intercept + step * (proposal.intercept - cur.intercept),
                output: LinearOutput::Probability,
            };
            let obj = irls_objective(&cand, x, y, cfg.lambda);
            if obj.is_finite() && obj <= cur_obj {
                accepted = Some((cand, obj));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_obj)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let change = next
            .weights
            .iter()
            .zip(&cur.weights)
            .map(|(a, b)| (a - b).abs())
            .fold((next.intercept - cur.intercept).abs(), f64::max);
        cur = next;
        cur_obj = next_obj;
        objective.push(cur_obj);
        if change < cfg.coord_tol {
            converged = true;
            break;
        }
    }
    cur.check_finite("IRLS")?;
    Ok(IrlsFit {
        model: cur,
        converged,
        iterations,
        objective,
    })
}

/// Smallest λ at which every non-intercept weight is zero.
pub fn lambda_max(x: ArrayView2<'_, f64>, y: &[bool]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().filter(|&&b| b).count() as f64 / n;
    x.columns()
        .into_iter()
        .map(|c| {
            (c.iter()
                .zip(y)
                .map(|(a, &yi)| a * (if yi { 1.0 } else { 0.0 } - ybar))
                .sum::<f64>()
                / n)
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Names and weights sorted by |weight| descending, ties by name.
pub fn rank_features(model: &LinearModel, names: &[String]) -> Result<Vec<(String, f64)>> {
    if names.len() != model.weights.len() {
        return Err(Error::Validation(format!(
            "{} names for {} weights",
            names.len(),
            model.weights.len()
        )));
    }
    let mut out: Vec<(String, f64)> = names.iter().cloned().zip(model.weights.iter().copied()).collect();
    out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Elastic-net logistic regression as a CV learner; the fit seed replaces `cfg.seed`.
#[derive(Debug, Clone)]
pub struct ElasticNet(pub ElasticNetConfig);

impl Learner for ElasticNet {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        let cfg = ElasticNetConfig { seed, ..self.0.clone() };
        Ok(Box::new(fit_sgd_elasticnet(x, y, &cfg)?))
    }
}

#[derive(Debug, Clone)]
pub struct IrlsL1(pub IrlsConfig);

impl Learner for IrlsL1 {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], _seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(fit_irls_l1(x, y, &self.0)?.model))
    }
}
