//! Team strengths, schedules and the two season generators.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bpcore::poisson_draw;
use crate::error::{Error, Result};

pub const STRENGTH_SD: f64 = 0.35;
pub const BVN_BASE_MEAN: f64 = 0.2;
pub const BVN_SD: f64 = 1.75;
pub const BVN_LOWER: f64 = -0.49;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamStrengths {
    pub attack: Vec<f64>,
    pub defend: Vec<f64>,
}

impl TeamStrengths {
    pub fn zeros(n_teams: usize) -> Self {
        Self {
            attack: vec![0.0; n_teams],
            defend: vec![0.0; n_teams],
        }
    }

    pub fn n_teams(&self) -> usize {
        self.attack.len()
    }
}

/// `(α, δ)` per team from a bivariate normal with mean 0, marginal SD 0.35
/// and correlation `rho_star`.
pub fn gen_team_strengths<R: Rng + ?Sized>(rho_star: f64, n_teams: usize, rng: &mut R) -> Result<TeamStrengths> {
    if !(rho_star.abs() < 1.0) {
        return Err(Error::Config(format!("|rho*| must be below 1, got {rho_star}")));
    }
    let c = (1.0 - rho_star * rho_star).sqrt();
    let mut s = TeamStrengths {
        attack: Vec::with_capacity(n_teams),
        defend: Vec::with_capacity(n_teams),
    };
    for _ in 0..n_teams {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        s.attack.push(STRENGTH_SD * z1);
        s.defend.push(STRENGTH_SD * (rho_star * z1 + c * z2));
    }
    Ok(s)
}

/// Every ordered pair `(home, away)` with `home != away`, once.
pub fn schedule_double_round_robin(n_teams: usize) -> Result<Vec<(usize, usize)>> {
    if n_teams < 2 {
        return Err(Error::Config(format!("need at least 2 teams, got {n_teams}")));
    }
    Ok((0..n_teams)
        .flat_map(|h| (0..n_teams).filter(move |&a| a != h).map(move |a| (h, a)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimGame {
    pub home: usize,
    pub away: usize,
    pub home_goals: u32,
    pub away_goals: u32,
}

impl SimGame {
    pub fn diff(&self) -> f64 {
        self.home_goals as f64 - self.away_goals as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSeason {
    pub n_teams: usize,
    pub games: Vec<SimGame>,
}

/// Independent Poisson goals with `λ1 = exp(T* + α_H + δ_A)` and
/// `λ2 = exp(α_A + δ_H)`.
pub fn simulate_bvp<R: Rng + ?Sized>(strengths: &TeamStrengths, t_star: f64, rng: &mut R) -> Result<SimSeason> {
    let n = strengths.n_teams();
    let games = schedule_double_round_robin(n)?
        .into_iter()
        .map(|(h, a)| {
            let l1 = (t_star + strengths.attack[h] + strengths.defend[a]).exp();
            let l2 = (strengths.attack[a] + strengths.defend[h]).exp();
            SimGame {
                home: h,
                away: a,
                home_goals: poisson_draw(l1, rng),
                away_goals: poisson_draw(l2, rng),
            }
        })
        .collect();
    Ok(SimSeason { n_teams: n, games })
}

/// Normal truncated below at `lower`, drawn by inverting the CDF.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, rng: &mut R) -> f64 {
    let std = Normal::standard();
    let p_lo = std.cdf((lower - mean) / sd);
    let u: f64 = rng.random();
    let p = p_lo + u * (1.0 - p_lo);
    // guard the open upper end against p == 1
    let p = p.min(1.0 - f64::EPSILON);
    (mean + sd * std.inverse_cdf(p)).max(lower)
}

/// Rounded truncated normal goals with mean `0.2 + α_H + δ_A` (home) and
/// `0.2 + α_A + δ_H` (away), then one extra home goal with probability `T*`.
pub fn simulate_bvn<R: Rng + ?Sized>(strengths: &TeamStrengths, t_star: f64, rng: &mut R) -> Result<SimSeason> {
    if ![0.0, 0.25, 0.5].contains(&t_star) {
        return Err(Error::Config(format!(
            "BVN home advantage must be 0, 0.25 or 0.5, got {t_star}"
        )));
    }
    let n = strengths.n_teams();
    let goals = |mean: f64, rng: &mut R| -> u32 {
        let x = truncated_normal(mean, BVN_SD, BVN_LOWER, rng).round_ties_even();
        x.max(0.0) as u32
    };
    let games = schedule_double_round_robin(n)?
        .into_iter()
        .map(|(h, a)| {
            let mut home_goals = goals(BVN_BASE_MEAN + strengths.attack[h] + strengths.defend[a], rng);
            let away_goals = goals(BVN_BASE_MEAN + strengths.attack[a] + strengths.defend[h], rng);
            if t_star > 0.0 && rng.random_bool(t_star) {
                home_goals += 1;
            }
            SimGame {
                home: h,
                away: a,
                home_goals,
                away_goals,
            }
        })
        .collect();
    Ok(SimSeason { n_teams: n, games })
}
