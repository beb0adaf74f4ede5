//! The three home-advantage estimators compared in the bias study. Each
//! returns an estimate on the goal-difference scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dgp::SimSeason;
use crate::error::{Error, Result};
use crate::model::{
    normal_ln_pdf, CovarianceMode, Design, Game, InverseGammaPrior, ModelSpec, Outcome, Posterior,
    PriorSpec,
};
use crate::sampler::{run_chains, Block, ChainConfig, InitRule, LogDensity, Transform};

/// Chain settings shared by the two Bayesian estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub n_chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            n_chains: 2,
            iterations: 5000,
            burn_in: 2000,
        }
    }
}

impl FitSettings {
    fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig::new(self.n_chains, self.iterations, self.burn_in, seed)
    }
}

fn check_season(season: &SimSeason) -> Result<()> {
    if season.games.is_empty() {
        return Err(Error::Estimation("season has no games".into()));
    }
    if season.games.iter().any(|g| g.home >= season.n_teams || g.away >= season.n_teams) {
        return Err(Error::Estimation("game refers to an unknown team".into()));
    }
    Ok(())
}

/// Intercept of the least-squares fit of the goal difference on an
/// intercept plus home-team and away-team dummies, each family dropping
/// its first team.
pub fn fit_ols_fixed_effects(season: &SimSeason) -> Result<f64> {
    check_season(season)?;
    let n = season.n_teams;
    let p = 1 + 2 * (n - 1);
    let m = season.games.len();
    if m < p {
        return Err(Error::Estimation(format!("{m} games cannot identify {p} coefficients")));
    }
    let mut x = DMatrix::<f64>::zeros(m, p);
    let mut y = DVector::<f64>::zeros(m);
    for (r, g) in season.games.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if g.home > 0 {
            x[(r, g.home)] = 1.0;
        }
        if g.away > 0 {
            x[(r, n - 1 + g.away)] = 1.0;
        }
        y[r] = g.diff();
    }
    let qr = x.qr();
    let rmat = qr.r();
    let diag: Vec<f64> = rmat.diagonal().iter().map(|v| v.abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    if diag.iter().any(|&d| d <= top * 1e-10) {
        return Err(Error::Estimation("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let beta = rmat
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Estimation("triangular solve failed".into()))?;
    Ok(beta[0])
}

/// Posterior of `D = α + θ_H − θ_A + ε` with `α ~ N(0, 100)`,
/// `θ ~ N(0, σ_team²)`, `ε ~ N(0, σ²)`, and inverse-gamma priors on both
/// scales.
pub struct PairedComparison<'a> {
    season: &'a SimSeason,
    team_games: Vec<Vec<u32>>,
    sigma_prior: InverseGammaPrior,
}

const IG11: InverseGammaPrior = InverseGammaPrior { shape: 1.0, rate: 1.0 };

impl<'a> PairedComparison<'a> {
    pub fn new(season: &'a SimSeason) -> Result<Self> {
        check_season(season)?;
        let mut team_games = vec![Vec::new(); season.n_teams];
        for (i, g) in season.games.iter().enumerate() {
            team_games[g.home].push(i as u32);
            team_games[g.away].push(i as u32);
        }
        Ok(Self {
            season,
            team_games,
            sigma_prior: IG11,
        })
    }

    fn alpha(&self) -> usize {
        0
    }

    fn theta(&self, j: usize) -> usize {
        1 + j
    }

    fn sigma_team(&self) -> usize {
        1 + self.season.n_teams
    }

    fn sigma(&self) -> usize {
        2 + self.season.n_teams
    }

    fn resid(&self, x: &[f64], i: usize, ov: (usize, f64)) -> f64 {
        let g = &self.season.games[i];
        let get = |k: usize| if k == ov.0 { ov.1 } else { x[k] };
        g.diff() - get(self.alpha()) - get(self.theta(g.home)) + get(self.theta(g.away))
    }

    fn ssr(&self, x: &[f64]) -> f64 {
        (0..self.season.games.len())
            .map(|i| self.resid(x, i, (usize::MAX, 0.0)).powi(2))
            .sum()
    }

    fn init(&self) -> InitRule {
        let mut base = vec![0.0; self.dim()];
        base[self.sigma_team()] = 0.5;
        base[self.sigma()] = 1.5;
        InitRule::new(base, 0.1)
    }
}

impl LogDensity for PairedComparison<'_> {
    fn dim(&self) -> usize {
        3 + self.season.n_teams
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = vec!["alpha".to_string()];
        v.extend((0..self.season.n_teams).map(|j| format!("theta[{j}]")));
        v.push("sigma_team".into());
        v.push("sigma".into());
        v
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let (st, s) = (x[self.sigma_team()], x[self.sigma()]);
        if st <= 0.0 || s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut lp = normal_ln_pdf(x[self.alpha()], 0.0, 100.0)
            + self.sigma_prior.ln_pdf(st)
            + self.sigma_prior.ln_pdf(s);
        for j in 0..self.season.n_teams {
            lp += normal_ln_pdf(x[self.theta(j)], 0.0, st * st);
        }
        let n = self.season.games.len() as f64;
        lp - n * s.ln() - self.ssr(x) / (2.0 * s * s)
    }

    fn blocks(&self) -> Vec<Block> {
        let nt = self.season.n_teams;
        vec![
            Block {
                name: "alpha".into(),
                indices: vec![self.alpha()],
                transform: Transform::Identity,
                initial_step: 0.1,
            },
            Block {
                name: "theta".into(),
                indices: (0..nt).map(|j| self.theta(j)).collect(),
                transform: Transform::Identity,
                initial_step: 0.3,
            },
            Block {
                name: "scales".into(),
                indices: vec![self.sigma_team(), self.sigma()],
                transform: Transform::Log,
                initial_step: 0.2,
            },
        ]
    }

    fn log_density_delta(&self, x: &[f64], index: usize, proposed: f64) -> f64 {
        let old = x[index];
        let s = x[self.sigma()];
        let st = x[self.sigma_team()];
        if index == self.sigma() || index == self.sigma_team() {
            if proposed <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let d_prior = self.sigma_prior.ln_pdf(proposed) - self.sigma_prior.ln_pdf(old);
            let (count, ss) = if index == self.sigma() {
                (self.season.games.len() as f64, self.ssr(x))
            } else {
                let nt = self.season.n_teams;
                (nt as f64, (0..nt).map(|j| x[self.theta(j)].powi(2)).sum())
            };
            return d_prior - count * (proposed.ln() - old.ln())
                - ss / 2.0 * (1.0 / (proposed * proposed) - 1.0 / (old * old));
        }
        let ov = (index, proposed);
        let keep = (usize::MAX, 0.0);
        let d_ss: f64 = if index == self.alpha() {
            (0..self.season.games.len())
                .map(|i| self.resid(x, i, ov).powi(2) - self.resid(x, i, keep).powi(2))
                .sum()
        } else {
            self.team_games[index - 1]
                .iter()
                .map(|&i| self.resid(x, i as usize, ov).powi(2) - self.resid(x, i as usize, keep).powi(2))
                .sum()
        };
        let d_prior = if index == self.alpha() {
            (old * old - proposed * proposed) / 200.0
        } else {
            (old * old - proposed * proposed) / (2.0 * st * st)
        };
        d_prior - d_ss / (2.0 * s * s)
    }
}

/// Posterior mean of α in the paired comparison model.
pub fn fit_paired_comparison(season: &SimSeason, settings: &FitSettings, seed: u64) -> Result<f64> {
    let target = PairedComparison::new(season)?;
    let draws = run_chains(&target, &target.init(), &settings.chain_config(seed))?;
    let a = draws.pooled(0);
    Ok(a.iter().sum::<f64>() / a.len() as f64)
}

pub(crate) fn season_design(season: &SimSeason) -> Result<(Design, ModelSpec)> {
    check_season(season)?;
    let slots = (0..season.n_teams).map(|j| (0, format!("team{j}"))).collect();
    let games = season
        .games
        .iter()
        .map(|g| Game {
            season: 0,
            home: g.home,
            away: g.away,
            post: false,
            y_home: g.home_goals,
            y_away: g.away_goals,
        })
        .collect();
    let design = Design::new(vec!["sim".into()], slots, games)?;
    let spec = ModelSpec {
        outcome: Outcome::Goals,
        covariance_mode: CovarianceMode::Zero,
        league_id: "sim".into(),
        seasons: vec!["sim".into()],
        restart_date: None,
    };
    Ok((design, spec))
}

/// Goals model with λ3 = 0 and one HA term; returns
/// `exp(μ̂ + T̂) − exp(μ̂)` at the posterior means.
pub fn fit_bvp_model(season: &SimSeason, settings: &FitSettings, seed: u64) -> Result<f64> {
    let (design, spec) = season_design(season)?;
    let priors = PriorSpec::non_informative(&spec);
    let post = Posterior::new(&design, &spec, &priors)?;
    let draws = run_chains(&post, &post.init_rule(0.1), &settings.chain_config(seed))?;
    let mean = |name: &str| {
        let v = draws.pooled_by_name(name).expect("parameter in layout");
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mu = mean("mu[sim]");
    let t = mean("T");
    Ok(crate::inference::goal_scale_ha(mu, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpcore::poisson_ln_pmf;
    use crate::rng::stream;
    use crate::simgrid::dgp::{schedule_double_round_robin, simulate_bvp, SimGame, TeamStrengths};
    use rand::Rng;

    fn season_from(n: usize, mut f: impl FnMut(usize, usize) -> (u32, u32)) -> SimSeason {
        let games = schedule_double_round_robin(n)
            .unwrap()
            .into_iter()
            .map(|(h, a)| {
                let (hg, ag) = f(h, a);
                SimGame {
                    home: h,
                    away: a,
                    home_goals: hg,
                    away_goals: ag,
                }
            })
            .collect();
        SimSeason { n_teams: n, games }
    }

    #[test]
    fn ols_all_draws_zero() {
        let s = season_from(6, |_, _| (0, 0));
        assert!(fit_ols_fixed_effects(&s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_noiseless_alpha() {
        // D = 2 + θ_H − θ_A with integer θ so goals stay non-negative
        let theta = [0i32, 1, 3, 2, 0, 1];
        let s = season_from(6, |h, a| {
            let d = 2 + theta[h] - theta[a];
            if d >= 0 {
                (d as u32, 0)
            } else {
                (0, (-d) as u32)
            }
        });
        assert!((fit_ols_fixed_effects(&s).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ols_rank_deficiency() {
        let mut s = season_from(4, |_, _| (1, 0));
        s.games.retain(|g| g.home != 3);
        assert!(matches!(fit_ols_fixed_effects(&s), Err(Error::Estimation(_))));
    }

    #[test]
    fn paired_delta_matches_full() {
        let mut rng = stream(1, &[]);
        let s = season_from(5, |_, _| (rng.random_range(0..4), rng.random_range(0..4)));
        let pc = PairedComparison::new(&s).unwrap();
        let x: Vec<f64> = (0..pc.dim()).map(|i| if i >= pc.sigma_team() { 0.8 + 0.1 * i as f64 } else { 0.1 * i as f64 - 0.2 }).collect();
        for i in 0..pc.dim() {
            let prop = x[i] * 1.1 + 0.05;
            let mut y = x.clone();
            y[i] = prop;
            let full = pc.log_density(&y) - pc.log_density(&x);
            assert!((full - pc.log_density_delta(&x, i, prop)).abs() < 1e-9, "coord {i}");
        }
    }

    #[test]
    fn paired_symmetric_season_near_zero() {
        // the reverse fixture carries the opposite differential
        let s = season_from(6, |h, a| if h < a { ((h + a) as u32 % 3, 0) } else { (0, (h + a) as u32 % 3) });
        let settings = FitSettings { n_chains: 2, iterations: 3000, burn_in: 1000 };
        let a = fit_paired_comparison(&s, &settings, 5).unwrap();
        assert!(a.abs() < 0.1, "{a}");
    }

    #[test]
    fn paired_recovers_alpha() {
        // noiseless up to a tiny jitter from alternating ±1 goal pairs
        let theta = [0i32, 1, 2, 0, 1, 2, 0, 1];
        let s = season_from(8, |h, a| {
            let d = 1 + theta[h] - theta[a];
            if d >= 0 { (d as u32, 0) } else { (0, (-d) as u32) }
        });
        let settings = FitSettings { n_chains: 2, iterations: 3000, burn_in: 1000 };
        let a = fit_paired_comparison(&s, &settings, 6).unwrap();
        assert!((a - 1.0).abs() < 0.05, "{a}");
    }

    #[test]
    fn bvp_fit_matches_grid_search_oracle() {
        // 4 teams with zero strengths, the schedule repeated 40 times
        let mut rng = stream(7, &[]);
        let z = TeamStrengths::zeros(4);
        let mut games = Vec::new();
        for _ in 0..40 {
            games.extend(simulate_bvp(&z, 0.3, &mut rng).unwrap().games);
        }
        let season = SimSeason { n_teams: 4, games };
        // maximum likelihood over (μ, T) with strengths fixed at 0
        let ll = |mu: f64, t: f64| -> f64 {
            season
                .games
                .iter()
                .map(|g| poisson_ln_pmf(g.home_goals, (mu + t).exp()) + poisson_ln_pmf(g.away_goals, mu.exp()))
                .sum()
        };
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=200 {
            for j in 0..=200 {
                let (mu, t) = (-0.3 + 0.003 * i as f64, -0.1 + 0.004 * j as f64);
                let v = ll(mu, t);
                if v > best.0 {
                    best = (v, mu, t);
                }
            }
        }
        let oracle = (best.1 + best.2).exp() - best.1.exp();
        let settings = FitSettings { n_chains: 2, iterations: 3000, burn_in: 1000 };
        let est = fit_bvp_model(&season, &settings, 9).unwrap();
        assert!((est - oracle).abs() < 0.05, "{est} vs {oracle}");
    }
}
