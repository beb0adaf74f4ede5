//! Multi-chain adaptive random-walk Metropolis.
//!
//! Every coordinate is updated in turn by a one-dimensional Gaussian
//! proposal on its transformed scale (identity, log or logit, with the
//! matching Jacobian). Coordinates are grouped into named blocks; each
//! coordinate carries its own proposal scale, tuned during burn-in toward a
//! target acceptance rate and frozen afterwards.
//!
//! Targets may also supply translation directions (for example a level
//! shift traded against a set of effects that leaves the likelihood
//! unchanged). After each sweep every direction gets one scalar Metropolis
//! move `x + c·d`, tuned the same way.

mod diagnostics;
mod draws;

pub use diagnostics::{ess, r_hat, summarize, ParamSummary};
pub use draws::PosteriorDraws;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// Positive parameter, proposals on `ln x`.
    Log,
    /// Parameter in (0, 1), proposals on `logit x`.
    Logit,
}

impl Transform {
    fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }

    fn inverse(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Logit => 1.0 / (1.0 + (-u).exp()),
        }
    }

    /// `ln |dx/du|` at `x`.
    fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => x.ln(),
            Transform::Logit => (x * (1.0 - x)).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub indices: Vec<usize>,
    pub transform: Transform,
    /// Starting proposal scale on the transformed axis.
    pub initial_step: f64,
}

/// An unnormalized log density over a flat parameter vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Update blocks. Defaults to one unconstrained block per coordinate.
    fn blocks(&self) -> Vec<Block> {
        self.param_names()
            .into_iter()
            .enumerate()
            .map(|(i, name)| Block {
                name,
                indices: vec![i],
                transform: Transform::Identity,
                initial_step: 1.0,
            })
            .collect()
    }

    /// `log_density(x with x[index] = proposed) - log_density(x)`.
    ///
    /// Targets with sparse structure should override this to touch only the
    /// terms that depend on `x[index]`.
    fn log_density_delta(&self, x: &[f64], index: usize, proposed: f64) -> f64 {
        let mut y = x.to_vec();
        y[index] = proposed;
        self.log_density(&y) - self.log_density(x)
    }

    /// Extra translation moves. Every coordinate involved must sit in an
    /// identity-transformed block.
    fn directions(&self) -> Vec<Direction> {
        Vec::new()
    }

    /// `log_density(x + c·d) - log_density(x)`.
    fn log_density_direction(&self, x: &[f64], direction: &Direction, c: f64) -> f64 {
        let mut y = x.to_vec();
        for &(i, w) in &direction.coords {
            y[i] += c * w;
        }
        self.log_density(&y) - self.log_density(x)
    }
}

/// A sparse translation direction over unconstrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub name: String,
    pub coords: Vec<(usize, f64)>,
    pub initial_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub target_accept: f64,
    /// Proposals per coordinate between scale updates.
    pub window: usize,
}

impl Default for Adaptation {
    fn default() -> Self {
        Self {
            target_accept: 0.3,
            window: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub adaptation: Adaptation,
}

impl ChainConfig {
    pub fn new(n_chains: usize, iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            n_chains,
            iterations,
            burn_in,
            seed,
            adaptation: Adaptation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        let t = self.adaptation.target_accept;
        if !(t > 0.0 && t < 1.0) || self.adaptation.window == 0 {
            return Err(Error::Config("adaptation target must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Starting points: `base` plus independent `N(0, jitter_sd²)` noise per chain
/// on each coordinate's transformed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct InitRule {
    pub base: Vec<f64>,
    pub jitter_sd: f64,
}

impl InitRule {
    pub fn new(base: Vec<f64>, jitter_sd: f64) -> Self {
        Self { base, jitter_sd }
    }
}

pub fn run_chains<T: LogDensity>(
    target: &T,
    init: &InitRule,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let dim = target.dim();
    if init.base.len() != dim {
        return Err(Error::LengthMismatch {
            left: init.base.len(),
            right: dim,
        });
    }
    let blocks = target.blocks();
    let mut transforms = vec![None; dim];
    for b in &blocks {
        for &i in &b.indices {
            if i >= dim || transforms[i].is_some() {
                return Err(Error::Config(format!(
                    "block `{}` has an invalid or duplicated index {i}",
                    b.name
                )));
            }
            transforms[i] = Some((b.transform, b.initial_step));
        }
    }
    if transforms.iter().any(Option::is_none) {
        return Err(Error::Config("some coordinates belong to no block".into()));
    }
    let layout: Vec<(Transform, f64)> = transforms.into_iter().map(Option::unwrap).collect();
    let directions = target.directions();
    for d in &directions {
        if d.coords.iter().any(|&(i, _)| i >= dim || layout[i].0 != Transform::Identity) {
            return Err(Error::Config(format!(
                "direction `{}` touches a constrained or unknown coordinate",
                d.name
            )));
        }
    }
    let order: Vec<usize> = blocks.iter().flat_map(|b| b.indices.iter().copied()).collect();
    let names = target.param_names();

    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_one(target, init, config, &layout, &order, &directions, &names, c))
        .collect::<Result<Vec<_>>>()?;

    let retained = config.iterations - config.burn_in;
    let mut values = Vec::with_capacity(chains.len());
    let mut acceptance = Vec::with_capacity(chains.len());
    let mut steps = Vec::with_capacity(chains.len());
    for ch in chains {
        values.push(ch.values);
        acceptance.push(ch.acceptance);
        steps.push(ch.steps);
    }
    Ok(PosteriorDraws::new(
        names,
        values,
        retained,
        config.burn_in,
        acceptance,
        steps,
    ))
}

struct ChainOutput {
    values: Vec<f64>,
    acceptance: Vec<f64>,
    steps: Vec<f64>,
}

fn run_one<T: LogDensity>(
    target: &T,
    init: &InitRule,
    config: &ChainConfig,
    layout: &[(Transform, f64)],
    order: &[usize],
    directions: &[Direction],
    names: &[String],
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = rng::stream(config.seed, &[chain as u64]);
    let dim = layout.len();

    let mut x: Vec<f64> = init
        .base
        .iter()
        .zip(layout)
        .map(|(&b, &(tr, _))| {
            let z: f64 = rng.sample(StandardNormal);
            tr.inverse(tr.forward(b) + init.jitter_sd * z)
        })
        .collect();
    let lp0 = target.log_density(&x);
    if !lp0.is_finite() {
        return Err(Error::Initialization { chain, value: lp0 });
    }

    let mut log_step: Vec<f64> = layout.iter().map(|&(_, s)| s.ln()).collect();
    let mut window_accepts = vec![0usize; dim];
    let mut window_count = 0usize;
    let mut windows_done = 0usize;
    let mut kept_accepts = vec![0usize; dim];
    let mut dir_log_step: Vec<f64> = directions.iter().map(|d| d.initial_step.ln()).collect();
    let mut dir_accepts = vec![0usize; directions.len()];
    let adapt = config.adaptation;

    let retained = config.iterations - config.burn_in;
    let mut values = Vec::with_capacity(retained * dim);

    for it in 0..config.iterations {
        for &i in order {
            let (tr, _) = layout[i];
            let cur = x[i];
            let u = tr.forward(cur);
            let z: f64 = rng.sample(StandardNormal);
            let prop = tr.inverse(u + log_step[i].exp() * z);
            if !prop.is_finite() || (tr == Transform::Logit && (prop <= 0.0 || prop >= 1.0)) {
                continue;
            }
            let delta = target.log_density_delta(&x, i, prop);
            if delta.is_nan() {
                return Err(Error::NonFinite {
                    chain,
                    iteration: it,
                    parameter: names[i].clone(),
                    state: names.iter().cloned().zip(x.iter().copied()).collect(),
                });
            }
            let log_ratio = delta + tr.log_jacobian(prop) - tr.log_jacobian(cur);
            let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
            if accept {
                x[i] = prop;
                if it < config.burn_in {
                    window_accepts[i] += 1;
                } else {
                    kept_accepts[i] += 1;
                }
            }
        }

        for (k, d) in directions.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let c = dir_log_step[k].exp() * z;
            let delta = target.log_density_direction(&x, d, c);
            if delta.is_nan() {
                return Err(Error::NonFinite {
                    chain,
                    iteration: it,
                    parameter: d.name.clone(),
                    state: names.iter().cloned().zip(x.iter().copied()).collect(),
                });
            }
            if delta >= 0.0 || rng.random::<f64>().ln() < delta {
                for &(i, w) in &d.coords {
                    x[i] += c * w;
                }
                if it < config.burn_in {
                    dir_accepts[k] += 1;
                }
            }
        }

        if it < config.burn_in {
            window_count += 1;
            if window_count == adapt.window {
                windows_done += 1;
                let gain = 2.0 / (windows_done as f64).sqrt();
                for i in 0..dim {
                    let rate = window_accepts[i] as f64 / adapt.window as f64;
                    log_step[i] += gain * (rate - adapt.target_accept);
                    window_accepts[i] = 0;
                }
                for k in 0..directions.len() {
                    let rate = dir_accepts[k] as f64 / adapt.window as f64;
                    dir_log_step[k] += gain * (rate - adapt.target_accept);
                    dir_accepts[k] = 0;
                }
                window_count = 0;
            }
        } else {
            values.extend_from_slice(&x);
        }
    }

    Ok(ChainOutput {
        values,
        acceptance: kept_accepts
            .iter()
            .map(|&a| a as f64 / retained as f64)
            .collect(),
        steps: log_step.iter().map(|s| s.exp()).collect(),
    })
}
