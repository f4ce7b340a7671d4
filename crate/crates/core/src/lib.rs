//! Probabilistic forecasting of end-of-day intraday electricity price indices.
//!
//! The crate is organised along the forecasting pipeline:
//!
//! - [`market_data`]: transaction ingestion, eligibility rules and live/end-of-day indices.
//! - [`merit_order`]: day-ahead auction curves, clearing and elasticity slopes.
//! - [`features`]: covariate store, feature rows, lags and the standardised design matrix.
//! - [`selection`]: orthogonal matching pursuit and cross-validated LASSO.
//! - [`bayes`]: empirical-Bayes prior, log posterior, NUTS sampling and the predictive mixture.
//! - [`predictive`]: highest density intervals, prediction intervals, point estimates, sign probabilities.
//! - [`evaluation`]: MAE, coverage/ACE, CRPS, sign accuracy and Diebold-Mariano tests.
//! - [`synthetic`]: seeded data generator with known ground truth.
//! - [`study`]: forecast scenarios, persistence and method comparison.

// NaN-rejecting comparisons such as `!(x > 0.0)` are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod market_data;
pub mod merit_order;
pub mod predictive;
pub mod selection;
pub mod study;
pub mod synthetic;

pub use error::{Error, Result};
