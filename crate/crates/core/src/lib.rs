//! Tabular classification toolkit: data loading, preprocessing, learners,
//! nested cross-validation and a config-driven pipeline.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod boosting;
pub mod error;
pub mod goa;
pub mod learner;
pub mod linear;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod preprocess;
pub mod semisup;
pub mod synth;
pub mod table;
pub mod trees;
pub mod validation;

pub use error::{Error, Result};
pub use learner::{derive_seed, Learner, Model, Simplicity, Tunable};
