//! Grasshopper swarm optimizer, MLP weight training with it, and
//! hyperparameter search over a unit cube projected onto natural domains.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::metrics::auc;
use crate::mlp::{mlp_loss, unflatten_weights, MlpArch, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Clamp,
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoaParams {
    pub n_agents: usize,
    pub max_iters: usize,
    pub c_max: f64,
    pub c_min: f64,
    pub social_f: f64,
    pub social_l: f64,
    pub elite_fraction: f64,
    /// Stop after this many iterations without improvement.
    pub patience: Option<usize>,
    pub boundary: Boundary,
    pub seed: u64,
}

impl Default for GoaParams {
    fn default() -> Self {
        GoaParams {
            n_agents: 300,
            max_iters: 1000,
            c_max: 1.0,
            c_min: 1e-5,
            social_f: 0.5,
            social_l: 1.5,
            elite_fraction: 0.1,
            patience: None,
            boundary: Boundary::Clamp,
            seed: 0,
        }
    }
}

impl GoaParams {
    fn validate(&self) -> Result<()> {
        if !(self.c_min < self.c_max) || self.n_agents < 2 || !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Validation(format!("invalid swarm parameters {self:?}")));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.n_agents as f64).round() as usize).clamp(1, self.n_agents)
    }
}

pub fn social_force(r: f64, f: f64, l: f64) -> f64 {
    f * (-r / l).exp() - (-r).exp()
}

/// Linear decay from `c_max` at iteration 0 to `c_min` at `max_iters`.
pub fn comfort_coefficient(iter: usize, max_iters: usize, c_max: f64, c_min: f64) -> f64 {
    if max_iters == 0 {
        return c_max;
    }
    c_max - iter as f64 * (c_max - c_min) / max_iters as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl Bounds {
    pub fn uniform(dims: usize, lo: f64, hi: f64) -> Self {
        Bounds {
            lb: vec![lo; dims],
            ub: vec![hi; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.lb.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lb.len() != self.ub.len() || self.lb.is_empty() || self.lb.iter().zip(&self.ub).any(|(l, u)| !(l < u)) {
            return Err(Error::Validation("bounds need lb < ub in every dimension".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lb.iter().zip(&self.ub)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    fn bring_back(&self, d: usize, v: f64, mode: Boundary) -> f64 {
        let (l, u) = (self.lb[d], self.ub[d]);
        match mode {
            Boundary::Clamp => v.clamp(l, u),
            Boundary::Reflect => {
                if !v.is_finite() {
                    return v.clamp(l, u);
                }
                let w = u - l;
                let m = (v - l).rem_euclid(2.0 * w);
                (if m <= w { l + m } else { u - (m - w) }).clamp(l, u)
            }
        }
    }
}

/// New positions for every agent from the previous full position matrix.
pub fn update_positions(positions: ArrayView2<'_, f64>, target: &[f64], c: f64, bounds: &Bounds, params: &GoaParams) -> Array2<f64> {
    let (n, dims) = positions.dim();
    let mut next = Array2::zeros((n, dims));
    for i in 0..n {
        let xi = positions.row(i);
        let mut social = vec![0.0; dims];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = positions.row(j);
            let dist = xi
                .iter()
                .zip(xj.iter())
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            for d in 0..dims {
                let diff = xj[d] - xi[d];
                social[d] += c * (bounds.ub[d] - bounds.lb[d]) / 2.0 * social_force(diff.abs(), params.social_f, params.social_l) * diff / dist;
            }
        }
        for d in 0..dims {
            next[[i, d]] = bounds.bring_back(d, c * social[d] + target[d], params.boundary);
        }
    }
    next
}

pub type Objective<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub positions: Array2<f64>,
    pub fitness: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub bounds: Bounds,
    pub iter: usize,
}

fn evaluate(positions: &Array2<f64>, fitness: &Objective<'_>) -> Result<Vec<f64>> {
    let vals: Vec<f64> = (0..positions.nrows())
        .into_par_iter()
        .map(|i| fitness(positions.row(i).as_slice().expect("row-major positions")))
        .collect();
    if let Some(agent) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFitness {
            agent,
            value: vals[agent],
        });
    }
    Ok(vals)
}

impl Swarm {
    /// Uniform random positions inside `bounds`, evaluated once.
    pub fn init(fitness: &Objective<'_>, bounds: &Bounds, params: &GoaParams) -> Result<Swarm> {
        params.validate()?;
        bounds.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let dims = bounds.dims();
        let positions = Array2::from_shape_fn((params.n_agents, dims), |(_, d)| rng.random_range(bounds.lb[d]..=bounds.ub[d]));
        let fit = evaluate(&positions, fitness)?;
        let best = argmin(&fit);
        Ok(Swarm {
            best_position: positions.row(best).to_vec(),
            best_fitness: fit[best],
            positions,
            fitness: fit,
            bounds: bounds.clone(),
            iter: 0,
        })
    }

    /// One iteration: elites stay, everyone else moves, then re-evaluation.
    /// Returns whether the best-ever fitness improved.
    pub fn step(&mut self, fitness: &Objective<'_>, params: &GoaParams) -> Result<bool> {
        self.iter += 1;
        let c = comfort_coefficient(self.iter.min(params.max_iters), params.max_iters, params.c_max, params.c_min);
        let mut next = update_positions(self.positions.view(), &self.best_position, c, &self.bounds, params);
        let mut order: Vec<usize> = (0..self.fitness.len()).collect();
        order.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        let elites = &order[..params.elite_count()];
        for &e in elites {
            next.row_mut(e).assign(&self.positions.row(e));
        }
        let mut fit = evaluate(&next, fitness)?;
        for &e in elites {
            fit[e] = self.fitness[e];
        }
        self.positions = next;
        self.fitness = fit;
        let best = argmin(&self.fitness);
        if self.fitness[best] < self.best_fitness {
            self.best_fitness = self.fitness[best];
            self.best_position = self.positions.row(best).to_vec();
            return Ok(true);
        }
        Ok(false)
    }
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b))).expect("non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoaResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Best-ever fitness after initialization and after each iteration.
    pub trace: Vec<f64>,
    /// Best held-out score and its position, when a monitor was given.
    pub monitored: Option<(Vec<f64>, f64)>,
}

impl GoaResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,best_fitness\n");
        for (i, f) in self.trace.iter().enumerate() {
            out.push_str(&format!("{i},{f}\n"));
        }
        out
    }
}

pub fn optimize(fitness: &Objective<'_>, bounds: &Bounds, params: &GoaParams) -> Result<GoaResult> {
    optimize_monitored(fitness, bounds, params, None)
}

/// Like [`optimize`]; with `monitor` set, patience counts iterations without
/// improvement of the monitor evaluated at the best-ever position.
pub fn optimize_monitored(
    fitness: &Objective<'_>,
    bounds: &Bounds,
    params: &GoaParams,
    monitor: Option<&Objective<'_>>,
) -> Result<GoaResult> {
    let mut swarm = Swarm::init(fitness, bounds, params)?;
    let mut trace = vec![swarm.best_fitness];
    let mut monitored = monitor.map(|m| (swarm.best_position.clone(), m(&swarm.best_position)));
    let mut stale = 0;
    for _ in 0..params.max_iters {
        let improved = swarm.step(fitness, params)?;
        trace.push(swarm.best_fitness);
        let better = match (monitor, monitored.as_mut()) {
            (Some(m), Some(best)) => {
                if improved {
                    let v = m(&swarm.best_position);
                    if v < best.1 {
                        *best = (swarm.best_position.clone(), v);
                        true
                    } else {
                        false
                    }
                } else {
                    false
                }
            }
            _ => improved,
        };
        stale = if better { 0 } else { stale + 1 };
        if params.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    Ok(GoaResult {
        best_position: swarm.best_position,
        best_fitness: swarm.best_fitness,
        trace,
        monitored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoaMlpConfig {
    pub weight_bound: f64,
    /// Patience used when a validation set is supplied.
    pub validation_patience: usize,
}

impl Default for GoaMlpConfig {
    fn default() -> Self {
        GoaMlpConfig {
            weight_bound: 5.0,
            validation_patience: 50,
        }
    }
}

/// Searches flattened MLP weights in [−wb, wb] minimizing training
/// cross-entropy. With `validation`, the returned model is the best-ever
/// position with the lowest validation cross-entropy.
pub fn goa_train_mlp(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    arch: &MlpArch,
    params: &GoaParams,
    cfg: &GoaMlpConfig,
    validation: Option<(ArrayView2<'_, f64>, &[bool])>,
) -> Result<(MlpModel, GoaResult)> {
    crate::linear::check_xy(x, y)?;
    arch.validate()?;
    if arch.input_size() != x.ncols() {
        return Err(Error::Validation("architecture input size differs from data".into()));
    }
    let ce = |xx: ArrayView2<'_, f64>, yy: &[bool], w: &[f64]| -> f64 {
        match unflatten_weights(arch, w) {
            Ok(m) => mlp_loss(&m, xx, yy, 0.0),
            Err(_) => f64::NAN,
        }
    };
    let fitness = |w: &[f64]| ce(x, y, w);
    let bounds = Bounds::uniform(arch.n_params(), -cfg.weight_bound, cfg.weight_bound);
    let result = match validation {
        Some((vx, vy)) => {
            let mon = move |w: &[f64]| ce(vx, vy, w);
            let p = GoaParams {
                patience: Some(params.patience.unwrap_or(cfg.validation_patience)),
                ..params.clone()
            };
            optimize_monitored(&fitness, &bounds, &p, Some(&mon))?
        }
        None => optimize(&fitness, &bounds, params)?,
    };
    let w = result.monitored.as_ref().map_or(&result.best_position, |m| &m.0);
    Ok((unflatten_weights(arch, w)?, result))
}

/// GOA-trained MLP as a learner (no validation monitor).
#[derive(Debug, Clone)]
pub struct GoaMlp {
    pub hidden: Vec<usize>,
    pub params: GoaParams,
    pub cfg: GoaMlpConfig,
}

impl Learner for GoaMlp {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn crate::learner::Model>> {
        let arch = MlpArch::new(x.ncols(), &self.hidden)?;
        let params = GoaParams { seed, ..self.params.clone() };
        Ok(Box::new(goa_train_mlp(x, y, &arch, &params, &self.cfg, None)?.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDomain {
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    #[serde(default)]
    pub integer: bool,
}

impl HyperDomain {
    fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || (self.scale == Scale::Log && !(self.lower > 0.0)) {
            return Err(Error::Validation(format!("invalid domain {self:?}")));
        }
        Ok(())
    }
}

pub fn project_domain(value: f64, dom: &HyperDomain) -> Result<f64> {
    dom.validate()?;
    if !(dom.lower <= value && value <= dom.upper) {
        return Err(Error::Validation(format!("{value} outside [{}, {}]", dom.lower, dom.upper)));
    }
    Ok(match dom.scale {
        Scale::Linear => (value - dom.lower) / (dom.upper - dom.lower),
        Scale::Log => (value.ln() - dom.lower.ln()) / (dom.upper.ln() - dom.lower.ln()),
    })
}

pub fn unproject_domain(u: f64, dom: &HyperDomain) -> Result<f64> {
    dom.validate()?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Validation(format!("{u} outside [0, 1]")));
    }
    let v = match dom.scale {
        Scale::Linear => dom.lower + u * (dom.upper - dom.lower),
        Scale::Log => (dom.lower.ln() + u * (dom.upper.ln() - dom.lower.ln())).exp(),
    };
    let v = v.clamp(dom.lower, dom.upper);
    Ok(if dom.integer { v.round().clamp(dom.lower.ceil(), dom.upper.floor()) } else { v })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub values: Vec<f64>,
    pub val_auc: f64,
    pub trace: Vec<f64>,
    /// Hyperparameter settings whose training failed (scored as fitness 1).
    pub failures: Vec<String>,
}

pub type HyperFactory<'a> = dyn Fn(&[f64]) -> Box<dyn Learner> + Sync + 'a;

/// Minimizes 1 − validation AUC over the unit cube of `domains`.
pub fn goa_tune_hyperparams(
    factory: &HyperFactory<'_>,
    domains: &[HyperDomain],
    train: (ArrayView2<'_, f64>, &[bool]),
    val: (ArrayView2<'_, f64>, &[bool]),
    params: &GoaParams,
) -> Result<TuneResult> {
    for d in domains {
        d.validate()?;
    }
    let failures = std::sync::Mutex::new(Vec::new());
    let natural = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(domains)
            .map(|(&ui, d)| unproject_domain(ui.clamp(0.0, 1.0), d).expect("validated domain"))
            .collect()
    };
    let fitness = |u: &[f64]| -> f64 {
        let v = natural(u);
        let outcome = factory(&v)
            .fit(train.0, train.1, params.seed)
            .and_then(|m| auc(&m.score_rows(val.0), val.1));
        match outcome {
            Ok(a) => 1.0 - a,
            Err(e) => {
                failures.lock().expect("failure log").push(format!("{v:?}: {e}"));
                1.0
            }
        }
    };
    let bounds = Bounds::uniform(domains.len(), 0.0, 1.0);
    let r = optimize(&fitness, &bounds, params)?;
    let mut failures = failures.into_inner().expect("failure log");
    failures.sort();
    failures.dedup();
    Ok(TuneResult {
        values: natural(&r.best_position),
        val_auc: 1.0 - r.best_fitness,
        trace: r.trace,
        failures,
    })
}
