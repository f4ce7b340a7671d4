//! Bayesian linear regression: empirical prior, posterior, NUTS sampling and
//! the posterior predictive mixture.

mod model;
pub mod nuts;
mod ppd;

pub use model::{
    empirical_prior, nuts_sample, ModelSpec, PosteriorSamples, Prior, SigmaPrior, SigmaWMode, DEFAULT_BETA,
    GRAM_RIDGE, SIGMA_W_FLOOR,
};
pub use nuts::{split_rhat, LogDensity, NutsConfig, NutsStats};
pub use ppd::{estimate_ppd, normal_cdf, normal_pdf, PredictiveMixture};
