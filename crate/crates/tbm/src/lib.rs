//! Topic Blockmodel: a stochastic blockmodel whose edges are word-count topic
//! models, fitted by collapsed Gibbs sampling, plus the comparison models and
//! held-out prediction tasks used to evaluate it.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod report;
pub mod sampler;

pub use error::{Error, Result};
