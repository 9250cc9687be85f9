//! Cost-sensitive decision engine for credit card limit adjustment decisions.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: case schema, CSV ingestion and the calibrated synthetic generator.
//! * [`cost`]: adjusted limits, instance-dependent misclassification costs,
//!   total cost and the per-instance Bayes decision rule.
//! * [`gbdt`] and [`mlp`]: the two learners, both trained on cost-weighted
//!   logistic loss.
//! * [`model`]: the trained-model envelope and its versioned file format.
//! * [`pipeline`]: fitting and scoring under a [`pipeline::CostRecipe`].
//! * [`tuning`]: k-fold plans and exhaustive grid search on total cost.
//! * [`evaluation`]: confusion matrices, accuracy, Cohen's kappa, reports.

pub mod cost;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gbdt;
pub mod mlp;
pub mod model;
pub mod pipeline;
pub mod tuning;

pub use error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps reported probabilities strictly inside (0, 1).
pub(crate) fn open_unit(p: f64) -> f64 {
    const EDGE: f64 = 1e-12;
    p.clamp(EDGE, 1.0 - EDGE)
}
