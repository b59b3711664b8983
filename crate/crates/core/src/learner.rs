//! Common fit/score interface shared by every classifier and the CV harness.

use std::fmt;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A fitted binary classifier. Higher scores mean "more positive".
pub trait Model: Send + Sync {
    fn score(&self, x: ArrayView1<'_, f64>) -> f64;

    /// Score at which the hard prediction flips to positive.
    fn decision_threshold(&self) -> f64 {
        0.5
    }

    fn predict_label(&self, x: ArrayView1<'_, f64>) -> bool {
        self.score(x) >= self.decision_threshold()
    }

    fn score_rows(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.score(r)).collect()
    }
}

/// Something that can be fitted to labeled rows. Fitting must be a pure
/// function of `(x, y, seed)`.
pub trait Learner: Send + Sync {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>>;
}

impl<F> Learner for F
where
    F: Fn(ArrayView2<'_, f64>, &[bool], u64) -> Result<Box<dyn Model>> + Send + Sync,
{
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[bool], seed: u64) -> Result<Box<dyn Model>> {
        self(x, y, seed)
    }
}

/// Which end of a hyperparameter grid gives the simpler model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simplicity {
    LargerIsSimpler,
    SmallerIsSimpler,
}

impl Simplicity {
    /// True when `a` is strictly simpler than `b`.
    pub fn simpler(self, a: f64, b: f64) -> bool {
        match self {
            Simplicity::LargerIsSimpler => a > b,
            Simplicity::SmallerIsSimpler => a < b,
        }
    }
}

pub type LearnerFactory = Arc<dyn Fn(f64) -> Box<dyn Learner> + Send + Sync>;

/// Fits once and returns one model per grid value, each equal to what the
/// factory's learner would fit for that value.
pub type PathFit = Arc<dyn Fn(&[f64], ArrayView2<'_, f64>, &[bool], u64) -> Result<Vec<Box<dyn Model>>> + Send + Sync>;

/// A learner family indexed by one hyperparameter, with its grid and the
/// direction in which it gets simpler.
#[derive(Clone)]
pub struct Tunable {
    pub name: String,
    pub grid: Vec<f64>,
    pub simplicity: Simplicity,
    pub factory: LearnerFactory,
    pub path: Option<PathFit>,
}

impl Tunable {
    pub fn new(
        name: impl Into<String>,
        grid: Vec<f64>,
        simplicity: Simplicity,
        factory: impl Fn(f64) -> Box<dyn Learner> + Send + Sync + 'static,
    ) -> Self {
        Tunable {
            name: name.into(),
            grid,
            simplicity,
            factory: Arc::new(factory),
            path: None,
        }
    }

    /// Lets the inner CV loop fit the whole grid in one go. Only valid when
    /// the learner ignores its seed.
    pub fn with_path(
        mut self,
        path: impl Fn(&[f64], ArrayView2<'_, f64>, &[bool], u64) -> Result<Vec<Box<dyn Model>>> + Send + Sync + 'static,
    ) -> Self {
        self.path = Some(Arc::new(path));
        self
    }

    pub fn learner(&self, param: f64) -> Box<dyn Learner> {
        (self.factory)(param)
    }
}

impl fmt::Debug for Tunable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tunable")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("simplicity", &self.simplicity)
            .finish()
    }
}

/// Model that scores every row with the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel(pub f64);

impl Model for ConstantModel {
    fn score(&self, _x: ArrayView1<'_, f64>) -> f64 {
        self.0
    }
}

/// splitmix64 mixing of a base seed with a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
