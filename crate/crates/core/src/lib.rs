//! Predict-then-optimize learning with decision-aware losses.
//!
//! The crate provides optimization oracles for knapsack, portfolio and
//! multiclass decision problems, the true optimality-gap loss together with
//! convex surrogates (squared, absolute deviation, SPO+ and a regularized
//! knapsack gap), linear predictors with first-order ERM training, synthetic
//! and CSV data pipelines, exact-enumeration diagnostics, LP model emission
//! and an experiment harness.

pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod loss;
pub mod mipgen;
pub mod numeric;
pub mod oracle;
pub mod predictor;
pub mod rng;

pub use error::{Error, Result};
pub use loss::{LossFn, RegGapLoss, RegGapParams, SpoPlusLoss, SquaredLoss, TrueLoss};
pub use predictor::{Dataset, LinearPredictor, Predict, TrainOptions, TrainReport};
pub use oracle::{
    canonical_cost, decide, IntervalDomain, KnapsackDomain, OptDomain, Orientation,
    PortfolioDomain, SimplexDomain, Solution,
};
