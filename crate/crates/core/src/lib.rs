//! The convergent Indian buffet process (CIBP).
//!
//! A three-parameter prior over binary feature-allocation matrices whose
//! expected number of nonzero columns stays bounded by `gamma` as the number
//! of rows grows. The crate provides the process in three equivalent forms
//! (sequential restaurant scheme, Poisson-Beta-Bernoulli hierarchy, and a
//! finite-intensity completely random measure), the exact pmf of
//! left-ordered equivalence classes, a two-parameter IBP baseline, and a
//! spike-and-slab sparse factor model with its MCMC sampler.

pub mod beta_math;
pub mod crm;
pub mod diagnostics;
pub mod error;
pub mod factor;
pub mod ibp;
pub mod lof;
pub mod matrix;
pub mod rng;
pub mod samplers;
pub mod sim;

pub use beta_math::{kplus_mean, log_beta, log_beta_ratio, new_dish_rate, BetaRatioArgs, CibpParams};
pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
pub use rng::RngStream;
