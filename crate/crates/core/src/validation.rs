//! Fixed train/validation/test split, five-fold nested cross-validation with
//! one-standard-deviation parameter selection, and repeated evaluation.

use std::collections::BTreeSet;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{derive_seed, Learner, Model, Simplicity, Tunable};
use crate::metrics::auc;

pub const OUTER_FOLDS: usize = 5;
pub const INNER_FOLDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

/// Shuffled 80/10/10 split of `0..n`. With `stratify`, each part's positive
/// count is apportioned to stay within one sample of the global share.
pub fn make_split(n: usize, seed: u64, stratify: Option<&[bool]>) -> Result<SplitPlan> {
    if n < 10 {
        return Err(Error::Validation(format!("need at least 10 rows to split, got {n}")));
    }
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_idx, val_idx, test_idx) = match stratify {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let test = idx.split_off(n_train + n_val);
            let val = idx.split_off(n_train);
            (idx, val, test)
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Validation("stratify labels length differs from n".into()));
            }
            let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            let share = pos.len() as f64 / n as f64;
            let train_pos = ((n_train as f64 * share).round() as usize).min(pos.len()).min(n_train);
            let val_pos = ((n_val as f64 * share).round() as usize)
                .min(pos.len() - train_pos)
                .min(n_val);
            let take = |v: &mut Vec<usize>, k: usize| -> Vec<usize> { v.drain(..k).collect() };
            let mut train = take(&mut pos, train_pos);
            train.extend(take(&mut neg, n_train - train_pos));
            let mut val = take(&mut pos, val_pos);
            val.extend(take(&mut neg, n_val - val_pos));
            let mut test = pos;
            test.extend(neg);
            train.shuffle(&mut rng);
            val.shuffle(&mut rng);
            test.shuffle(&mut rng);
            (train, val, test)
        }
    };
    Ok(SplitPlan {
        train_idx,
        val_idx,
        test_idx,
        seed,
    })
}

/// Assignment of `indices` to `k` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn new(indices: &[usize], k: usize, seed: u64) -> Result<Self> {
        if k < 2 || indices.len() < k {
            return Err(Error::Validation(format!(
                "cannot make {k} folds from {} rows",
                indices.len()
            )));
        }
        let mut idx = indices.to_vec();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut folds = vec![Vec::new(); k];
        for (i, r) in idx.into_iter().enumerate() {
            folds[i % k].push(r);
        }
        Ok(FoldPlan { k, folds, seed })
    }

    /// All indices outside fold `i`.
    pub fn complement(&self, i: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub params: Vec<f64>,
    pub mean_auc: Vec<f64>,
    pub sd_auc: Vec<f64>,
}

impl AccuracyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,mean_auc,sd_auc\n");
        for i in 0..self.params.len() {
            out.push_str(&format!("{},{},{}\n", self.params[i], self.mean_auc[i], self.sd_auc[i]));
        }
        out
    }

    /// Element-wise mean of several curves over the same grid.
    pub fn average(curves: &[AccuracyCurve]) -> Option<AccuracyCurve> {
        let first = curves.first()?;
        let k = curves.len() as f64;
        let avg = |f: fn(&AccuracyCurve) -> &Vec<f64>| -> Vec<f64> {
            (0..first.params.len())
                .map(|i| curves.iter().map(|c| f(c)[i]).sum::<f64>() / k)
                .collect()
        };
        Some(AccuracyCurve {
            params: first.params.clone(),
            mean_auc: avg(|c| &c.mean_auc),
            sd_auc: avg(|c| &c.sd_auc),
        })
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Simplest parameter whose mean AUC is within one standard deviation of the
/// best mean.
pub fn one_sd_rule(curve: &AccuracyCurve, simplicity: Simplicity) -> f64 {
    let best = (0..curve.params.len())
        .max_by(|&a, &b| curve.mean_auc[a].total_cmp(&curve.mean_auc[b]).then(b.cmp(&a)))
        .expect("accuracy curve is non-empty");
    let floor = curve.mean_auc[best] - curve.sd_auc[best];
    let mut chosen = curve.params[best];
    for (i, &p) in curve.params.iter().enumerate() {
        if curve.mean_auc[i] >= floor && simplicity.simpler(p, chosen) {
            chosen = p;
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFold {
    pub fold: usize,
    pub chosen_param: f64,
    pub val_auc: f64,
    /// AUC of the tuned model on the held-out outer fold; informational.
    pub heldout_auc: f64,
    pub curve: AccuracyCurve,
}

/// Index sets touched during one outer fold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FoldAudit {
    pub heldout: Vec<usize>,
    pub inner_train: Vec<Vec<usize>>,
    pub inner_val: Vec<Vec<usize>>,
    pub tuned_train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexAudit {
    pub folds: Vec<FoldAudit>,
    pub final_train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl IndexAudit {
    /// Describes the first leak found, if any.
    pub fn find_leak(&self) -> Option<String> {
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<usize>>();
        let val = set(&self.val);
        let test = set(&self.test);
        if !val.is_disjoint(&test) {
            return Some("validation and test overlap".into());
        }
        for (k, f) in self.folds.iter().enumerate() {
            let held = set(&f.heldout);
            let tuned = set(&f.tuned_train);
            for (name, s) in [("held-out fold", &held), ("validation", &val), ("test", &test)] {
                if !tuned.is_disjoint(s) {
                    return Some(format!("outer fold {k}: tuned training set touches {name}"));
                }
            }
            for (j, (tr, va)) in f.inner_train.iter().zip(&f.inner_val).enumerate() {
                let tr = set(tr);
                for (name, s) in [
                    ("inner validation", &set(va)),
                    ("held-out fold", &held),
                    ("validation", &val),
                    ("test", &test),
                ] {
                    if !tr.is_disjoint(s) {
                        return Some(format!("outer fold {k}, inner fold {j}: training touches {name}"));
                    }
                }
            }
        }
        if !set(&self.final_train).is_disjoint(&test) {
            return Some("final training set touches test".into());
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub learner: String,
    pub folds: Vec<OuterFold>,
    pub mean_val_auc: f64,
    pub best_param: f64,
    pub test_auc: f64,
    #[serde(skip)]
    pub test_scores: Vec<f64>,
    #[serde(skip)]
    pub audit: IndexAudit,
}

impl CvReport {
    /// Inner-loop accuracy curves averaged over outer folds.
    pub fn mean_curve(&self) -> AccuracyCurve {
        let curves: Vec<AccuracyCurve> = self.folds.iter().map(|f| f.curve.clone()).collect();
        AccuracyCurve::average(&curves).expect("report has folds")
    }
}

fn take_rows(x: ArrayView2<'_, f64>, y: &[bool], rows: &[usize]) -> (ndarray::Array2<f64>, Vec<bool>) {
    (x.select(Axis(0), rows), rows.iter().map(|&r| y[r]).collect())
}

fn fit_and_score(
    learner: &dyn Learner,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    train: &[usize],
    eval: &[usize],
    seed: u64,
) -> Result<(Box<dyn Model>, Vec<f64>)> {
    let (xt, yt) = take_rows(x, y, train);
    let model = learner.fit(xt.view(), &yt, seed)?;
    let xe = x.select(Axis(0), eval);
    let scores = model.score_rows(xe.view());
    Ok((model, scores))
}

fn scored_auc(scores: &[f64], y: &[bool], rows: &[usize], what: &str) -> Result<f64> {
    let labels: Vec<bool> = rows.iter().map(|&r| y[r]).collect();
    auc(scores, &labels).map_err(|e| match e {
        Error::SingleClass => Error::FoldMissingClass {
            fold: what.to_string(),
            detail: "scoring rows contain a single class".into(),
        },
        other => other,
    })
}

fn require_both(y: &[bool], rows: &[usize], what: &str) -> Result<()> {
    let pos = rows.iter().filter(|&&r| y[r]).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::FoldMissingClass {
            fold: what.to_string(),
            detail: format!("{} rows, {pos} positive", rows.len()),
        });
    }
    Ok(())
}

/// Nested cross-validation over `split.train_idx`.
///
/// Each outer fold tunes on its four remaining folds (train on three, score
/// on one), picks a parameter by the one-sd rule, refits on all four and is
/// scored on `split.val_idx`. The parameter with the best validation AUC
/// (simpler wins ties) is refit on train + validation and scored on test.
pub fn nested_cv(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    split: &SplitPlan,
    learner: &Tunable,
    seed: u64,
) -> Result<CvReport> {
    if learner.grid.is_empty() {
        return Err(Error::Validation(format!("empty grid for `{}`", learner.name)));
    }
    if y.len() != x.nrows() {
        return Err(Error::Validation("labels and rows differ in length".into()));
    }
    require_both(y, &split.val_idx, "validation split")?;
    require_both(y, &split.test_idx, "test split")?;
    let outer = FoldPlan::new(&split.train_idx, OUTER_FOLDS, derive_seed(seed, &[0]))?;
    let mut audit = IndexAudit {
        val: split.val_idx.clone(),
        test: split.test_idx.clone(),
        ..Default::default()
    };

    let mut inner_plans = Vec::with_capacity(OUTER_FOLDS);
    for k in 0..OUTER_FOLDS {
        require_both(y, &outer.folds[k], &format!("outer fold {k}"))?;
        let rest = outer.complement(k);
        let inner = FoldPlan::new(&rest, INNER_FOLDS, derive_seed(seed, &[1, k as u64]))?;
        let mut fa = FoldAudit {
            heldout: outer.folds[k].clone(),
            tuned_train: rest,
            ..Default::default()
        };
        for j in 0..INNER_FOLDS {
            let tr = inner.complement(j);
            require_both(y, &inner.folds[j], &format!("outer fold {k} / inner fold {j}"))?;
            require_both(y, &tr, &format!("outer fold {k} / inner training {j}"))?;
            fa.inner_train.push(tr);
            fa.inner_val.push(inner.folds[j].clone());
        }
        audit.folds.push(fa);
        inner_plans.push(inner);
    }

    // One job per (outer, inner, grid point); merged by key, not completion order.
    let inner_aucs: Vec<f64> = match &learner.path {
        None => {
            let jobs: Vec<(usize, usize, usize)> = (0..OUTER_FOLDS)
                .flat_map(|k| (0..INNER_FOLDS).flat_map(move |j| (0..learner.grid.len()).map(move |g| (k, j, g))))
                .collect();
            jobs.par_iter()
                .map(|&(k, j, g)| {
                    let fa = &audit.folds[k];
                    let model = learner.learner(learner.grid[g]);
                    let s = derive_seed(seed, &[2, k as u64, j as u64, g as u64]);
                    let (_, scores) = fit_and_score(model.as_ref(), x, y, &fa.inner_train[j], &fa.inner_val[j], s)?;
                    scored_auc(&scores, y, &fa.inner_val[j], &format!("outer fold {k} / inner fold {j}"))
                })
                .collect::<Result<Vec<f64>>>()?
        }
        Some(path) => {
            let jobs: Vec<(usize, usize)> = (0..OUTER_FOLDS).flat_map(|k| (0..INNER_FOLDS).map(move |j| (k, j))).collect();
            let per_job = jobs
                .par_iter()
                .map(|&(k, j)| {
                    let fa = &audit.folds[k];
                    let (xt, yt) = take_rows(x, y, &fa.inner_train[j]);
                    let models = path(&learner.grid, xt.view(), &yt, derive_seed(seed, &[2, k as u64, j as u64]))?;
                    let xe = x.select(Axis(0), &fa.inner_val[j]);
                    models
                        .iter()
                        .map(|m| scored_auc(&m.score_rows(xe.view()), y, &fa.inner_val[j], &format!("outer fold {k} / inner fold {j}")))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            per_job.into_iter().flatten().collect()
        }
    };

    let n_grid = learner.grid.len();
    let folds: Vec<OuterFold> = (0..OUTER_FOLDS)
        .into_par_iter()
        .map(|k| {
            let mut mean_auc = Vec::with_capacity(n_grid);
            let mut sd_auc = Vec::with_capacity(n_grid);
            for g in 0..n_grid {
                let vals: Vec<f64> = (0..INNER_FOLDS)
                    .map(|j| inner_aucs[(k * INNER_FOLDS + j) * n_grid + g])
                    .collect();
                let (m, s) = mean_sd(&vals);
                mean_auc.push(m);
                sd_auc.push(s);
            }
            let curve = AccuracyCurve {
                params: learner.grid.clone(),
                mean_auc,
                sd_auc,
            };
            let chosen = one_sd_rule(&curve, learner.simplicity);
            let fa = &audit.folds[k];
            let (model, val_scores) = fit_and_score(
                learner.learner(chosen).as_ref(),
                x,
                y,
                &fa.tuned_train,
                &split.val_idx,
                derive_seed(seed, &[3, k as u64]),
            )?;
            let val_auc = scored_auc(&val_scores, y, &split.val_idx, "validation split")?;
            let held = x.select(Axis(0), &fa.heldout);
            let heldout_auc = scored_auc(&model.score_rows(held.view()), y, &fa.heldout, &format!("outer fold {k}"))?;
            Ok(OuterFold {
                fold: k,
                chosen_param: chosen,
                val_auc,
                heldout_auc,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = &folds[0];
    for f in &folds[1..] {
        if f.val_auc > best.val_auc
            || (f.val_auc == best.val_auc && learner.simplicity.simpler(f.chosen_param, best.chosen_param))
        {
            best = f;
        }
    }
    let best_param = best.chosen_param;
    let mean_val_auc = folds.iter().map(|f| f.val_auc).sum::<f64>() / folds.len() as f64;

    let mut final_train = split.train_idx.clone();
    final_train.extend_from_slice(&split.val_idx);
    let (_, test_scores) = fit_and_score(
        learner.learner(best_param).as_ref(),
        x,
        y,
        &final_train,
        &split.test_idx,
        derive_seed(seed, &[4]),
    )?;
    let test_auc = scored_auc(&test_scores, y, &split.test_idx, "test split")?;
    audit.final_train = final_train;

    Ok(CvReport {
        learner: learner.name.clone(),
        folds,
        mean_val_auc,
        best_param,
        test_auc,
        test_scores,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedEval {
    pub val_mean: f64,
    pub val_sd: f64,
    pub test_mean: f64,
    pub test_sd: f64,
    pub runs: Vec<(f64, f64)>,
    #[serde(skip)]
    pub test_scores: Vec<f64>,
}

/// Fits on the training split once per seed and scores validation and test.
/// `test_scores` holds the first run's test scores.
pub fn repeated_eval(
    learner: &dyn Learner,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    split: &SplitPlan,
    seeds: &[u64],
) -> Result<RepeatedEval> {
    if seeds.is_empty() {
        return Err(Error::Validation("repeated evaluation needs at least one seed".into()));
    }
    let outcomes = seeds
        .par_iter()
        .map(|&s| {
            let (xt, yt) = take_rows(x, y, &split.train_idx);
            let model = learner.fit(xt.view(), &yt, s)?;
            let val_scores = model.score_rows(x.select(Axis(0), &split.val_idx).view());
            let test_scores = model.score_rows(x.select(Axis(0), &split.test_idx).view());
            let v = scored_auc(&val_scores, y, &split.val_idx, "validation split")?;
            let t = scored_auc(&test_scores, y, &split.test_idx, "test split")?;
            Ok((v, t, test_scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let vals: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let tests: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let (val_mean, val_sd) = mean_sd(&vals);
    let (test_mean, test_sd) = mean_sd(&tests);
    Ok(RepeatedEval {
        val_mean,
        val_sd,
        test_mean,
        test_sd,
        runs: vals.into_iter().zip(tests).collect(),
        test_scores: outcomes.into_iter().next().map(|o| o.2).unwrap_or_default(),
    })
}
