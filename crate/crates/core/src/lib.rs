//! Bayesian bivariate Poisson models for paired match counts.
//!
//! The crate covers the distribution itself ([`bpcore`]), the goals and
//! yellow-card regression models with their priors ([`model`]), a multi-chain
//! adaptive Metropolis sampler with R-hat/ESS diagnostics ([`sampler`]),
//! posterior summaries of pre/post home advantage ([`inference`]), the
//! single-season estimator bias study ([`simgrid`]) and match ingestion
//! ([`data`]).

pub mod bpcore;
pub mod data;
pub mod error;
pub mod inference;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simgrid;

pub use error::{Error, Result};
