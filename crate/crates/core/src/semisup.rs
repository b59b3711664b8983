//! Self-training and co-training wrappers around any probabilistic learner.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Learner, Model};
use crate::preprocess::FeatureGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub confidence_alpha: f64,
    pub max_iters: usize,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            confidence_alpha: 0.9,
            max_iters: 20,
        }
    }
}

pub struct SelfTrainFit {
    pub model: Box<dyn Model>,
    /// Refits after the initial labeled-only fit.
    pub iterations: usize,
    pub converged: bool,
    /// Size of the confident subset used by the last refit.
    pub pseudo_labeled: usize,
    /// Hard predictions on U from the returned model.
    pub predictions: Vec<bool>,
}

fn both_classes(y: &[bool]) -> bool {
    y.iter().any(|&b| b) && y.iter().any(|&b| !b)
}

fn stack(xl: ArrayView2<'_, f64>, yl: &[bool], xu: ArrayView2<'_, f64>, pick: &[(usize, bool)]) -> (Array2<f64>, Vec<bool>) {
    let rows: Vec<usize> = pick.iter().map(|p| p.0).collect();
    let extra = xu.select(Axis(0), &rows);
    let x = ndarray::concatenate(Axis(0), &[xl, extra.view()]).expect("same width");
    let mut y = yl.to_vec();
    y.extend(pick.iter().map(|p| p.1));
    (x, y)
}

/// Fit on L, then repeatedly refit on L plus the unlabeled rows predicted
/// with confidence max(p, 1−p) > α, until predictions on U stop changing.
pub fn self_train(
    learner: &dyn Learner,
    xl: ArrayView2<'_, f64>,
    yl: &[bool],
    xu: ArrayView2<'_, f64>,
    cfg: &SelfTrainConfig,
    seed: u64,
) -> Result<SelfTrainFit> {
    if !(cfg.confidence_alpha > 0.5 && cfg.confidence_alpha <= 1.0) {
        return Err(Error::Validation(format!("confidence_alpha {} not in (0.5, 1]", cfg.confidence_alpha)));
    }
    if !both_classes(yl) {
        return Err(Error::SingleClass);
    }
    let mut model = learner.fit(xl, yl, seed)?;
    let mut probs = model.score_rows(xu);
    let mut prev: Vec<bool> = probs.iter().map(|&p| p >= model.decision_threshold()).collect();
    let mut iterations = 0;
    let mut pseudo_labeled = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let confident: Vec<(usize, bool)> = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p.max(1.0 - p) > cfg.confidence_alpha)
            .map(|(j, &p)| (j, p >= 0.5))
            .collect();
        pseudo_labeled = confident.len();
        let (x, y) = stack(xl, yl, xu, &confident);
        model = learner.fit(x.view(), &y, seed)?;
        iterations += 1;
        probs = model.score_rows(xu);
        let preds: Vec<bool> = probs.iter().map(|&p| p >= model.decision_threshold()).collect();
        let stable = preds == prev;
        prev = preds;
        if stable {
            converged = true;
            break;
        }
    }
    Ok(SelfTrainFit {
        model,
        iterations,
        converged,
        pseudo_labeled,
        predictions: prev,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Column indices of each view.
    pub views: Vec<Vec<usize>>,
    pub max_rounds: usize,
}

impl ViewSpec {
    fn validate(&self, p: usize) -> Result<()> {
        if self.views.is_empty() || self.views.iter().any(|v| v.is_empty() || v.iter().any(|&c| c >= p)) {
            return Err(Error::Validation(format!("views must be non-empty subsets of 0..{p}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    #[default]
    Soft,
    Hard,
}

pub struct CoTrainModel {
    pub models: Vec<Box<dyn Model>>,
    pub views: Vec<Vec<usize>>,
    pub mode: VoteMode,
}

impl Model for CoTrainModel {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64 {
        vote_predict(&self.models, &self.views, x, self.mode)
    }
}

/// Mean per-view probability (soft) or fraction of positive votes (hard).
pub fn vote_predict(models: &[Box<dyn Model>], views: &[Vec<usize>], x: ArrayView1<'_, f64>, mode: VoteMode) -> f64 {
    let total: f64 = models
        .iter()
        .zip(views)
        .map(|(m, v)| {
            let xv = x.select(Axis(0), v);
            match mode {
                VoteMode::Soft => m.score(xv.view()),
                VoteMode::Hard => m.predict_label(xv.view()) as u8 as f64,
            }
        })
        .sum();
    total / models.len() as f64
}

pub struct CoTrainFit {
    pub model: CoTrainModel,
    /// Training-set size used by each round's fits.
    pub train_sizes: Vec<usize>,
    /// Unlabeled row indices in the order they were added.
    pub added: Vec<usize>,
}

/// Each round fits one model per view on the shared training set, predicts
/// the remaining unlabeled rows, and adds those on which every view agrees.
/// With zero rounds the views are fit once on L.
pub fn co_train(
    learner: &dyn Learner,
    xl: ArrayView2<'_, f64>,
    yl: &[bool],
    xu: ArrayView2<'_, f64>,
    spec: &ViewSpec,
    seed: u64,
) -> Result<CoTrainFit> {
    spec.validate(xl.ncols())?;
    if !both_classes(yl) {
        return Err(Error::SingleClass);
    }
    let mut picked: Vec<(usize, bool)> = Vec::new();
    let mut remaining: Vec<usize> = (0..xu.nrows()).collect();
    let mut train_sizes = Vec::new();
    let rounds = spec.max_rounds.max(1);
    let mut models = Vec::new();
    for round in 0..rounds {
        let (x, y) = stack(xl, yl, xu, &picked);
        train_sizes.push(y.len());
        models = spec
            .views
            .par_iter()
            .enumerate()
            .map(|(k, v)| {
                if !both_classes(&y) {
                    return Err(Error::ViewLostClass { view: k, round });
                }
                learner.fit(x.select(Axis(1), v).view(), &y, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        if spec.max_rounds == 0 {
            break;
        }
        let rest = xu.select(Axis(0), &remaining);
        let votes: Vec<Vec<bool>> = models
            .iter()
            .zip(&spec.views)
            .map(|(m, v)| {
                let xv = rest.select(Axis(1), v);
                xv.rows().into_iter().map(|r| m.predict_label(r)).collect()
            })
            .collect();
        let mut keep = Vec::new();
        for (pos, &j) in remaining.iter().enumerate() {
            let first = votes[0][pos];
            if votes.iter().all(|v| v[pos] == first) {
                picked.push((j, first));
            } else {
                keep.push(j);
            }
        }
        remaining = keep;
    }
    Ok(CoTrainFit {
        model: CoTrainModel {
            models,
            views: spec.views.clone(),
            mode: VoteMode::Soft,
        },
        train_sizes,
        added: picked.iter().map(|p| p.0).collect(),
    })
}

/// Every split of the groups into two non-empty sides, group 0 always on
/// the first side. Returns group indices per side.
pub fn enumerate_two_views(n_groups: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    if n_groups < 2 {
        return Vec::new();
    }
    let rest = n_groups - 1;
    let mut out = Vec::new();
    // bit i set → group i+1 joins side A; all-set leaves B empty
    for mask in 0u64..(1u64 << rest) - 1 {
        let mut a = vec![0];
        let mut b = Vec::new();
        for i in 0..rest {
            if mask >> i & 1 == 1 {
                a.push(i + 1);
            } else {
                b.push(i + 1);
            }
        }
        out.push((a, b));
    }
    out
}

/// Column indices for a pair of group sides.
pub fn views_from_groups(groups: &[FeatureGroup], sides: &(Vec<usize>, Vec<usize>), max_rounds: usize) -> ViewSpec {
    let cols = |s: &[usize]| -> Vec<usize> { s.iter().flat_map(|&g| groups[g].indices()).collect() };
    ViewSpec {
        views: vec![cols(&sides.0), cols(&sides.1)],
        max_rounds,
    }
}

/// Self-training as a CV learner; the unlabeled pool is fixed up front.
#[derive(Clone)]
pub struct SelfTraining {
    pub base: Arc<dyn Learner>,
    pub cfg: SelfTrainConfig,
    pub unlabeled: Arc<Array2<f64>>,
}

impl Learner for SelfTraining {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        Ok(self_train(self.base.as_ref(), x, y, self.unlabeled.view(), &self.cfg, seed)?.model)
    }
}

#[derive(Clone)]
pub struct CoTraining {
    pub base: Arc<dyn Learner>,
    pub views: ViewSpec,
    pub unlabeled: Arc<Array2<f64>>,
}

impl Learner for CoTraining {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(co_train(self.base.as_ref(), x, y, self.unlabeled.view(), &self.views, seed)?.model))
    }
}
