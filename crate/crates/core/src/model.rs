//! Goals and yellow-card bivariate Poisson regressions with pre/post restart
//! home-advantage terms, their priors, and the log posterior.
//!
//! For match `i` in season `s` (all on the log scale):
//!
//! ```text
//! goals:    ln λ1 = μ_s + HA_i + α_home + δ_away      ln λ2 = μ_s + α_away + δ_home
//! yellows:  ln λ1 = μ_s + HA_i + τ_home               ln λ2 = μ_s + τ_away
//! HA_i = T before the restart date, T' on or after it; ln λ3 = γ or λ3 = 0
//! ```

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bpcore::{ln_factorial, ln_shared_sum};
use crate::data::Match;
use crate::error::{Error, Result};
use crate::sampler::{Block, Direction, InitRule, LogDensity, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Goals,
    Yellows,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Goals => "goals",
            Outcome::Yellows => "yellows",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// λ3 = 0 exactly.
    Zero,
    /// λ3 = exp(γ).
    Free,
}

impl CovarianceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CovarianceMode::Zero => "zero",
            CovarianceMode::Free => "free",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcome: Outcome,
    pub covariance_mode: CovarianceMode,
    pub league_id: String,
    pub seasons: Vec<String>,
    /// `None` fits a single home-advantage term (no post-restart split).
    pub restart_date: Option<NaiveDate>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seasons.is_empty() {
            return Err(Error::Config("model needs at least one season".into()));
        }
        Ok(())
    }
}

/// One match reduced to parameter slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Game {
    pub season: usize,
    /// Team-season slot of the home side.
    pub home: usize,
    pub away: usize,
    pub post: bool,
    pub y_home: u32,
    pub y_away: u32,
}

/// Index maps from matches to parameter slots. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    seasons: Vec<String>,
    /// `(season index, team)` per team-season slot, in slot order.
    slots: Vec<(usize, String)>,
    games: Vec<Game>,
}

impl Design {
    /// Validates slot indices and rejects seasons or slots without games.
    pub fn new(seasons: Vec<String>, slots: Vec<(usize, String)>, games: Vec<Game>) -> Result<Self> {
        let mut season_used = vec![false; seasons.len()];
        let mut slot_used = vec![false; slots.len()];
        for g in &games {
            if g.season >= seasons.len() || g.home >= slots.len() || g.away >= slots.len() {
                return Err(Error::Design("game refers to a slot outside the design".into()));
            }
            if g.home == g.away {
                return Err(Error::Design("game with identical home and away slot".into()));
            }
            if slots[g.home].0 != g.season || slots[g.away].0 != g.season {
                return Err(Error::Design("team-season slot used outside its season".into()));
            }
            season_used[g.season] = true;
            slot_used[g.home] = true;
            slot_used[g.away] = true;
        }
        if let Some(s) = season_used.iter().position(|u| !u) {
            return Err(Error::Design(format!("season `{}` has no matches", seasons[s])));
        }
        if let Some(j) = slot_used.iter().position(|u| !u) {
            return Err(Error::Design(format!(
                "team `{}` in season `{}` appears in no match",
                slots[j].1, seasons[slots[j].0]
            )));
        }
        Ok(Self {
            seasons,
            slots,
            games,
        })
    }

    pub fn seasons(&self) -> &[String] {
        &self.seasons
    }

    pub fn n_seasons(&self) -> usize {
        self.seasons.len()
    }

    pub fn slots(&self) -> &[(usize, String)] {
        &self.slots
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn games(&self) -> &[Game] {
        &self.games
    }

    pub fn has_post(&self) -> bool {
        self.games.iter().any(|g| g.post)
    }
}

/// Build the design for one league and outcome. Matches missing the
/// outcome's counts are left out of the sample.
pub fn build_design(matches: &[Match], spec: &ModelSpec) -> Result<Design> {
    spec.validate()?;
    let mut slot_of: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    let mut pending = Vec::new();
    for m in matches {
        if m.league != spec.league_id {
            return Err(Error::Design(format!(
                "match of league `{}` in a `{}` design",
                m.league, spec.league_id
            )));
        }
        let season = spec
            .seasons
            .iter()
            .position(|s| s == &m.season)
            .ok_or_else(|| Error::Design(format!("unknown season `{}`", m.season)))?;
        let counts = match spec.outcome {
            Outcome::Goals => m.goals(),
            Outcome::Yellows => m.yellows(),
        };
        let Some((yh, ya)) = counts else { continue };
        let post = spec.restart_date.is_some_and(|d| m.is_post(d));
        pending.push((season, m.home.as_str(), m.away.as_str(), post, yh, ya));
        slot_of.insert((season, m.home.as_str()), 0);
        slot_of.insert((season, m.away.as_str()), 0);
    }
    // dense slots ordered by (season, team)
    let mut slots = Vec::with_capacity(slot_of.len());
    for (j, ((s, team), idx)) in slot_of.iter_mut().enumerate() {
        *idx = j;
        slots.push((*s, team.to_string()));
    }
    let games = pending
        .into_iter()
        .map(|(season, h, a, post, y_home, y_away)| Game {
            season,
            home: slot_of[&(season, h)],
            away: slot_of[&(season, a)],
            post,
            y_home,
            y_away,
        })
        .collect();
    Design::new(spec.seasons.clone(), slots, games)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TeamEffects {
    /// Goals model: attacking and defending strength per team-season.
    AttackDefend {
        attack: Vec<f64>,
        defend: Vec<f64>,
        sigma_att: f64,
        sigma_def: f64,
    },
    /// Yellow-card model: one card tendency per team-season.
    Team { team: Vec<f64>, sigma_team: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Season intercepts μ_s.
    pub mu: Vec<f64>,
    /// Pre-restart home advantage T.
    pub home_adv: f64,
    /// Post-restart home advantage T'; absent for single-HA models.
    pub home_adv_post: Option<f64>,
    pub effects: TeamEffects,
    /// ln λ3; ignored when the covariance mode is zero.
    pub gamma: Option<f64>,
}

/// Flat-vector layout of [`ParamVector`] for a given design and spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_seasons: usize,
    pub n_slots: usize,
    pub outcome: Outcome,
    pub has_post: bool,
    pub has_gamma: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Mu(usize),
    HomeAdv,
    HomeAdvPost,
    Attack(usize),
    Defend(usize),
    Team(usize),
    SigmaAtt,
    SigmaDef,
    SigmaTeam,
    Gamma,
}

impl ParamLayout {
    pub fn new(design: &Design, spec: &ModelSpec) -> Self {
        Self {
            n_seasons: design.n_seasons(),
            n_slots: design.n_slots(),
            outcome: spec.outcome,
            has_post: spec.restart_date.is_some(),
            has_gamma: spec.covariance_mode == CovarianceMode::Free,
        }
    }

    pub fn home_adv(&self) -> usize {
        self.n_seasons
    }

    pub fn home_adv_post(&self) -> Option<usize> {
        self.has_post.then_some(self.n_seasons + 1)
    }

    fn effects_start(&self) -> usize {
        self.n_seasons + 1 + self.has_post as usize
    }

    /// Index of the home-side effect that enters λ1 and λ2 for slot `j`:
    /// attack for goals, team tendency for yellows.
    pub fn primary(&self, j: usize) -> usize {
        self.effects_start() + j
    }

    /// Defend index for goals.
    pub fn defend(&self, j: usize) -> usize {
        self.effects_start() + self.n_slots + j
    }

    fn scales_start(&self) -> usize {
        match self.outcome {
            Outcome::Goals => self.effects_start() + 2 * self.n_slots,
            Outcome::Yellows => self.effects_start() + self.n_slots,
        }
    }

    fn n_scales(&self) -> usize {
        match self.outcome {
            Outcome::Goals => 2,
            Outcome::Yellows => 1,
        }
    }

    pub fn gamma(&self) -> Option<usize> {
        self.has_gamma
            .then_some(self.scales_start() + self.n_scales())
    }

    pub fn dim(&self) -> usize {
        self.scales_start() + self.n_scales() + self.has_gamma as usize
    }

    pub fn coord(&self, i: usize) -> Coord {
        let e0 = self.effects_start();
        let s0 = self.scales_start();
        if i < self.n_seasons {
            Coord::Mu(i)
        } else if i == self.n_seasons {
            Coord::HomeAdv
        } else if i < e0 {
            Coord::HomeAdvPost
        } else if i < s0 {
            let k = i - e0;
            match self.outcome {
                Outcome::Yellows => Coord::Team(k),
                Outcome::Goals if k < self.n_slots => Coord::Attack(k),
                Outcome::Goals => Coord::Defend(k - self.n_slots),
            }
        } else if Some(i) == self.gamma() {
            Coord::Gamma
        } else {
            match (self.outcome, i - s0) {
                (Outcome::Goals, 0) => Coord::SigmaAtt,
                (Outcome::Goals, _) => Coord::SigmaDef,
                (Outcome::Yellows, _) => Coord::SigmaTeam,
            }
        }
    }

    pub fn names(&self, design: &Design) -> Vec<String> {
        let slot = |j: usize| {
            let (s, team) = &design.slots()[j];
            format!("{}:{}", design.seasons()[*s], team)
        };
        (0..self.dim())
            .map(|i| match self.coord(i) {
                Coord::Mu(s) => format!("mu[{}]", design.seasons()[s]),
                Coord::HomeAdv => "T".into(),
                Coord::HomeAdvPost => "T_prime".into(),
                Coord::Attack(j) => format!("attack[{}]", slot(j)),
                Coord::Defend(j) => format!("defend[{}]", slot(j)),
                Coord::Team(j) => format!("team[{}]", slot(j)),
                Coord::SigmaAtt => "sigma_att".into(),
                Coord::SigmaDef => "sigma_def".into(),
                Coord::SigmaTeam => "sigma_team".into(),
                Coord::Gamma => "gamma".into(),
            })
            .collect()
    }

    /// Locations at 0, scales at 1.
    pub fn default_init(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| match self.coord(i) {
                Coord::SigmaAtt | Coord::SigmaDef | Coord::SigmaTeam => 1.0,
                _ => 0.0,
            })
            .collect()
    }
}

impl ParamVector {
    /// All locations zero, all scales one, γ = 0 when the mode is free.
    pub fn zeros(layout: &ParamLayout) -> Self {
        Self::from_flat(layout, &layout.default_init()).expect("layout-sized vector")
    }

    pub fn to_flat(&self, layout: &ParamLayout) -> Result<Vec<f64>> {
        let mismatch = |what: &str| Error::Evaluation(format!("parameter vector does not fit the design: {what}"));
        if self.mu.len() != layout.n_seasons {
            return Err(mismatch("season intercepts"));
        }
        let mut x = self.mu.clone();
        x.push(self.home_adv);
        match (layout.has_post, self.home_adv_post) {
            (true, Some(tp)) => x.push(tp),
            (false, _) => {}
            (true, None) => return Err(mismatch("missing post-restart home advantage")),
        }
        match (&self.effects, layout.outcome) {
            (
                TeamEffects::AttackDefend {
                    attack,
                    defend,
                    sigma_att,
                    sigma_def,
                },
                Outcome::Goals,
            ) if attack.len() == layout.n_slots && defend.len() == layout.n_slots => {
                x.extend_from_slice(attack);
                x.extend_from_slice(defend);
                x.push(*sigma_att);
                x.push(*sigma_def);
            }
            (TeamEffects::Team { team, sigma_team }, Outcome::Yellows)
                if team.len() == layout.n_slots =>
            {
                x.extend_from_slice(team);
                x.push(*sigma_team);
            }
            _ => return Err(mismatch("team effects")),
        }
        if layout.has_gamma {
            x.push(self.gamma.ok_or_else(|| mismatch("missing gamma"))?);
        }
        Ok(x)
    }

    pub fn from_flat(layout: &ParamLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: layout.dim(),
            });
        }
        let n = layout.n_slots;
        let e0 = layout.primary(0);
        let s0 = layout.scales_start();
        let effects = match layout.outcome {
            Outcome::Goals => TeamEffects::AttackDefend {
                attack: x[e0..e0 + n].to_vec(),
                defend: x[e0 + n..e0 + 2 * n].to_vec(),
                sigma_att: x[s0],
                sigma_def: x[s0 + 1],
            },
            Outcome::Yellows => TeamEffects::Team {
                team: x[e0..e0 + n].to_vec(),
                sigma_team: x[s0],
            },
        };
        Ok(Self {
            mu: x[..layout.n_seasons].to_vec(),
            home_adv: x[layout.home_adv()],
            home_adv_post: layout.home_adv_post().map(|i| x[i]),
            effects,
            gamma: layout.gamma().map(|i| x[i]),
        })
    }
}

/// Normal prior given by mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPrior {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        normal_ln_pdf(x, self.mean, self.variance)
    }
}

/// Inverse-gamma prior, shape–rate: density ∝ x^{-shape-1} e^{-rate/x}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl InverseGammaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - statrs::function::gamma::ln_gamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.rate / x
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu: NormalPrior,
    pub home_adv: NormalPrior,
    pub home_adv_post: NormalPrior,
    pub sigma_att: InverseGammaPrior,
    pub sigma_def: InverseGammaPrior,
    pub sigma_team: InverseGammaPrior,
    /// Required when the covariance mode is free.
    pub gamma: Option<NormalPrior>,
}

impl PriorSpec {
    /// μ, T, T' ~ N(0, 25); σ ~ Inverse-Gamma(1, 1); γ ~ N(0, 1/2) for goals or
    /// N(0, 2) for yellows when λ3 is free.
    pub fn non_informative(spec: &ModelSpec) -> Self {
        let ig = InverseGammaPrior {
            shape: 1.0,
            rate: 1.0,
        };
        Self {
            mu: NormalPrior::new(0.0, 25.0),
            home_adv: NormalPrior::new(0.0, 25.0),
            home_adv_post: NormalPrior::new(0.0, 25.0),
            sigma_att: ig,
            sigma_def: ig,
            sigma_team: ig,
            gamma: (spec.covariance_mode == CovarianceMode::Free).then(|| gamma_prior(spec.outcome)),
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let normals = [Some(self.mu), Some(self.home_adv), Some(self.home_adv_post), self.gamma];
        for n in normals.into_iter().flatten() {
            if !(n.variance > 0.0 && n.variance.is_finite() && n.mean.is_finite()) {
                return Err(Error::Config(format!("normal prior variance must be positive, got {}", n.variance)));
            }
        }
        for ig in [self.sigma_att, self.sigma_def, self.sigma_team] {
            if !(ig.shape > 0.0 && ig.rate > 0.0) {
                return Err(Error::Config("inverse-gamma shape and rate must be positive".into()));
            }
        }
        if spec.covariance_mode == CovarianceMode::Free && self.gamma.is_none() {
            return Err(Error::Config("free covariance mode needs a gamma prior".into()));
        }
        Ok(())
    }
}

pub fn gamma_prior(outcome: Outcome) -> NormalPrior {
    match outcome {
        Outcome::Goals => NormalPrior::new(0.0, 0.5),
        Outcome::Yellows => NormalPrior::new(0.0, 2.0),
    }
}

/// Empirical-Bayes home-advantage priors shared by every league.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBayes {
    pub pre_mean: f64,
    /// Three times the sample SD of the stage-1 pre-restart means.
    pub pre_scale: f64,
    pub post_mean: f64,
    pub post_scale: f64,
    pub priors: BTreeMap<String, PriorSpec>,
}

/// Build `T ~ N(mean(T̂), (3 SD(T̂))²)` and the same for T' from stage-1
/// posterior means `league → (T̂, T̂')`. SD uses the n−1 denominator.
pub fn empirical_bayes_priors(
    stage1: &BTreeMap<String, (f64, f64)>,
    outcome: Outcome,
) -> Result<EmpiricalBayes> {
    if stage1.len() < 2 {
        return Err(Error::Config(format!(
            "empirical-Bayes priors need at least 2 leagues, got {}",
            stage1.len()
        )));
    }
    let pre: Vec<f64> = stage1.values().map(|v| v.0).collect();
    let post: Vec<f64> = stage1.values().map(|v| v.1).collect();
    let (pre_mean, pre_sd) = mean_sd(&pre);
    let (post_mean, post_sd) = mean_sd(&post);
    if !(pre_sd > 0.0 && post_sd > 0.0) {
        return Err(Error::Config(
            "stage-1 home-advantage means have zero spread; prior would be degenerate".into(),
        ));
    }
    let (pre_scale, post_scale) = (3.0 * pre_sd, 3.0 * post_sd);
    let base = ModelSpec {
        outcome,
        covariance_mode: CovarianceMode::Free,
        league_id: String::new(),
        seasons: vec![String::new()],
        restart_date: None,
    };
    let mut prior = PriorSpec::non_informative(&base);
    prior.home_adv = NormalPrior::new(pre_mean, pre_scale * pre_scale);
    prior.home_adv_post = NormalPrior::new(post_mean, post_scale * post_scale);
    let priors = stage1.keys().map(|k| (k.clone(), prior.clone())).collect();
    Ok(EmpiricalBayes {
        pre_mean,
        pre_scale,
        post_mean,
        post_scale,
        priors,
    })
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Log posterior of one league's model, usable as a sampler target.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    design: &'a Design,
    priors: &'a PriorSpec,
    layout: ParamLayout,
    /// Game indices that each coordinate enters.
    touches: Vec<Vec<u32>>,
}

impl<'a> Posterior<'a> {
    pub fn new(design: &'a Design, spec: &ModelSpec, priors: &'a PriorSpec) -> Result<Self> {
        spec.validate()?;
        priors.validate(spec)?;
        if design.n_seasons() != spec.seasons.len() {
            return Err(Error::Design("design and spec disagree on seasons".into()));
        }
        if spec.restart_date.is_none() && design.has_post() {
            return Err(Error::Design("post-restart games in a single-HA model".into()));
        }
        let layout = ParamLayout::new(design, spec);
        let mut touches = vec![Vec::new(); layout.dim()];
        for (gi, g) in design.games().iter().enumerate() {
            let gi = gi as u32;
            touches[g.season].push(gi);
            let ha = if g.post {
                layout.home_adv_post().expect("post games imply a split model")
            } else {
                layout.home_adv()
            };
            touches[ha].push(gi);
            touches[layout.primary(g.home)].push(gi);
            touches[layout.primary(g.away)].push(gi);
            if layout.outcome == Outcome::Goals {
                touches[layout.defend(g.home)].push(gi);
                touches[layout.defend(g.away)].push(gi);
            }
            if let Some(k) = layout.gamma() {
                touches[k].push(gi);
            }
        }
        Ok(Self {
            design,
            priors,
            layout,
            touches,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn design(&self) -> &Design {
        self.design
    }

    /// Locations at 0, scales at 1, jittered per chain.
    pub fn init_rule(&self, jitter_sd: f64) -> InitRule {
        InitRule::new(self.layout.default_init(), jitter_sd)
    }

    #[inline]
    fn etas(&self, x: &[f64], g: &Game, ov: (usize, f64)) -> (f64, f64) {
        let get = |i: usize| if i == ov.0 { ov.1 } else { x[i] };
        let l = &self.layout;
        let ha = if g.post {
            // layout guarantees a post index whenever a post game exists
            l.home_adv() + 1
        } else {
            l.home_adv()
        };
        let mu = get(g.season);
        match l.outcome {
            Outcome::Goals => (
                mu + get(ha) + get(l.primary(g.home)) + get(l.defend(g.away)),
                mu + get(l.primary(g.away)) + get(l.defend(g.home)),
            ),
            Outcome::Yellows => (
                mu + get(ha) + get(l.primary(g.home)),
                mu + get(l.primary(g.away)),
            ),
        }
    }

    /// Game log-likelihood without the `-ln y1! - ln y2!` constant.
    #[inline]
    fn kernel(g: &Game, eta1: f64, eta2: f64, gamma: Option<f64>) -> f64 {
        let (y1, y2) = (g.y_home, g.y_away);
        let lin = y1 as f64 * eta1 + y2 as f64 * eta2 - eta1.exp() - eta2.exp();
        match gamma {
            None => lin,
            Some(gm) => lin - gm.exp() + ln_shared_sum(y1, y2, gm - eta1 - eta2),
        }
    }

    fn gamma_at(&self, x: &[f64], ov: (usize, f64)) -> Option<f64> {
        self.layout
            .gamma()
            .map(|k| if k == ov.0 { ov.1 } else { x[k] })
    }

    pub fn log_likelihood_flat(&self, x: &[f64]) -> f64 {
        let none = (usize::MAX, 0.0);
        let gamma = self.gamma_at(x, none);
        self.design
            .games()
            .iter()
            .map(|g| {
                let (e1, e2) = self.etas(x, g, none);
                Self::kernel(g, e1, e2, gamma) - ln_factorial(g.y_home) - ln_factorial(g.y_away)
            })
            .sum()
    }

    pub fn log_prior_flat(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        let p = self.priors;
        let mut lp = 0.0;
        let scale = |c: Coord| -> f64 {
            (0..l.dim())
                .find(|&i| l.coord(i) == c)
                .map_or(f64::NAN, |i| x[i])
        };
        let (s_att, s_def, s_team) = match l.outcome {
            Outcome::Goals => (scale(Coord::SigmaAtt), scale(Coord::SigmaDef), f64::NAN),
            Outcome::Yellows => (f64::NAN, f64::NAN, scale(Coord::SigmaTeam)),
        };
        for (i, &v) in x.iter().enumerate() {
            lp += match l.coord(i) {
                Coord::Mu(_) => p.mu.ln_pdf(v),
                Coord::HomeAdv => p.home_adv.ln_pdf(v),
                Coord::HomeAdvPost => p.home_adv_post.ln_pdf(v),
                Coord::Attack(_) => effect_ln_pdf(v, s_att),
                Coord::Defend(_) => effect_ln_pdf(v, s_def),
                Coord::Team(_) => effect_ln_pdf(v, s_team),
                Coord::SigmaAtt => p.sigma_att.ln_pdf(v),
                Coord::SigmaDef => p.sigma_def.ln_pdf(v),
                Coord::SigmaTeam => p.sigma_team.ln_pdf(v),
                Coord::Gamma => p.gamma.map_or(0.0, |g| g.ln_pdf(v)),
            };
            if lp == f64::NEG_INFINITY {
                return lp;
            }
        }
        lp
    }

    fn family(&self, c: Coord) -> std::ops::Range<usize> {
        let l = &self.layout;
        let n = l.n_slots;
        match c {
            Coord::SigmaAtt | Coord::SigmaTeam => l.primary(0)..l.primary(0) + n,
            Coord::SigmaDef => l.defend(0)..l.defend(0) + n,
            _ => 0..0,
        }
    }

    /// Prior log density of a location coordinate at value `v`.
    fn location_prior(&self, x: &[f64], i: usize, v: f64) -> f64 {
        let p = self.priors;
        match self.layout.coord(i) {
            Coord::Mu(_) => p.mu.ln_pdf(v),
            Coord::HomeAdv => p.home_adv.ln_pdf(v),
            Coord::HomeAdvPost => p.home_adv_post.ln_pdf(v),
            Coord::Gamma => p.gamma.map_or(0.0, |g| g.ln_pdf(v)),
            c @ (Coord::Attack(_) | Coord::Defend(_) | Coord::Team(_)) => {
                effect_ln_pdf(v, x[self.sigma_index(c)])
            }
            Coord::SigmaAtt | Coord::SigmaDef | Coord::SigmaTeam => unreachable!("scales are not locations"),
        }
    }

    fn sigma_index(&self, c: Coord) -> usize {
        let s0 = self.layout.scales_start();
        match c {
            Coord::Attack(_) | Coord::Team(_) => s0,
            _ => s0 + 1,
        }
    }
}

fn effect_ln_pdf(v: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 || sigma.is_nan() {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(v, 0.0, sigma * sigma)
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names(self.design)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let lp = self.log_prior_flat(x);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_likelihood_flat(x)
    }

    fn blocks(&self) -> Vec<Block> {
        let l = &self.layout;
        let mut groups: BTreeMap<&'static str, (usize, Vec<usize>, Transform, f64)> = BTreeMap::new();
        for i in 0..l.dim() {
            let (name, order, tr, step) = match l.coord(i) {
                Coord::Mu(_) => ("mu", 0, Transform::Identity, 0.05),
                Coord::HomeAdv => ("T", 1, Transform::Identity, 0.05),
                Coord::HomeAdvPost => ("T_prime", 2, Transform::Identity, 0.2),
                Coord::Attack(_) => ("attack", 3, Transform::Identity, 0.2),
                Coord::Defend(_) => ("defend", 4, Transform::Identity, 0.2),
                Coord::Team(_) => ("team", 3, Transform::Identity, 0.2),
                Coord::SigmaAtt | Coord::SigmaDef | Coord::SigmaTeam => ("sigma", 5, Transform::Log, 0.3),
                Coord::Gamma => ("gamma", 6, Transform::Identity, 0.3),
            };
            groups.entry(name).or_insert((order, Vec::new(), tr, step)).1.push(i);
        }
        let mut blocks: Vec<_> = groups.into_iter().collect();
        blocks.sort_by_key(|(_, (order, ..))| *order);
        blocks
            .into_iter()
            .map(|(name, (_, indices, transform, initial_step))| Block {
                name: name.to_string(),
                indices,
                transform,
                initial_step,
            })
            .collect()
    }

    /// Per season, the shifts of μ_s against the team effects of that season
    /// (and attack against defend) that leave every rate unchanged.
    fn directions(&self) -> Vec<Direction> {
        let l = &self.layout;
        let mut out = Vec::new();
        for (s, season) in self.design.seasons().iter().enumerate() {
            let slots: Vec<usize> = (0..l.n_slots)
                .filter(|&j| self.design.slots()[j].0 == s)
                .collect();
            let shift = |name: &str, lead: Option<usize>, plus: &dyn Fn(usize) -> usize, minus: Option<&dyn Fn(usize) -> usize>| {
                let mut coords: Vec<(usize, f64)> = lead.into_iter().map(|i| (i, 1.0)).collect();
                for &j in &slots {
                    match minus {
                        Some(m) => {
                            coords.push((plus(j), 1.0));
                            coords.push((m(j), -1.0));
                        }
                        None => coords.push((plus(j), -1.0)),
                    }
                }
                Direction {
                    name: format!("{name}[{season}]"),
                    coords,
                    initial_step: 0.05,
                }
            };
            let primary = |j: usize| l.primary(j);
            match l.outcome {
                Outcome::Goals => {
                    let defend = |j: usize| l.defend(j);
                    out.push(shift("mu_attack", Some(s), &primary, None));
                    out.push(shift("mu_defend", Some(s), &defend, None));
                    out.push(shift("attack_defend", None, &primary, Some(&defend)));
                }
                Outcome::Yellows => out.push(shift("mu_team", Some(s), &primary, None)),
            }
        }
        out
    }

    fn log_density_direction(&self, x: &[f64], direction: &Direction, c: f64) -> f64 {
        direction
            .coords
            .iter()
            .map(|&(i, w)| self.location_prior(x, i, x[i] + c * w) - self.location_prior(x, i, x[i]))
            .sum()
    }

    fn log_density_delta(&self, x: &[f64], index: usize, proposed: f64) -> f64 {
        let c = self.layout.coord(index);
        let old = x[index];
        let p = self.priors;
        match c {
            Coord::SigmaAtt | Coord::SigmaDef | Coord::SigmaTeam => {
                let ig = match c {
                    Coord::SigmaAtt => p.sigma_att,
                    Coord::SigmaDef => p.sigma_def,
                    _ => p.sigma_team,
                };
                let mut d = ig.ln_pdf(proposed) - ig.ln_pdf(old);
                if proposed <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let range = self.family(c);
                let n = range.len() as f64;
                let ss: f64 = x[range].iter().map(|v| v * v).sum();
                // Σ ln N(v; 0, σ²) = -n ln σ - ss / (2σ²) + const
                d += -n * (proposed.ln() - old.ln()) - ss / 2.0 * (1.0 / (proposed * proposed) - 1.0 / (old * old));
                d
            }
            _ => {
                let prior = match c {
                    Coord::Mu(_) => p.mu.ln_pdf(proposed) - p.mu.ln_pdf(old),
                    Coord::HomeAdv => p.home_adv.ln_pdf(proposed) - p.home_adv.ln_pdf(old),
                    Coord::HomeAdvPost => {
                        p.home_adv_post.ln_pdf(proposed) - p.home_adv_post.ln_pdf(old)
                    }
                    Coord::Gamma => p.gamma.map_or(0.0, |g| g.ln_pdf(proposed) - g.ln_pdf(old)),
                    _ => {
                        let s = x[self.sigma_index(c)];
                        (old * old - proposed * proposed) / (2.0 * s * s)
                    }
                };
                let keep = (usize::MAX, 0.0);
                let swap = (index, proposed);
                let g_old = self.gamma_at(x, keep);
                let g_new = self.gamma_at(x, swap);
                let games = self.design.games();
                let mut lik = 0.0;
                for &gi in &self.touches[index] {
                    let g = &games[gi as usize];
                    let (a1, a2) = self.etas(x, g, swap);
                    let (b1, b2) = self.etas(x, g, keep);
                    lik += Self::kernel(g, a1, a2, g_new) - Self::kernel(g, b1, b2, g_old);
                }
                prior + lik
            }
        }
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite parameter value {v}")));
    }
    Ok(())
}

/// Σ over games of the bivariate Poisson log-pmf at the model's rates.
pub fn log_likelihood(params: &ParamVector, design: &Design, spec: &ModelSpec) -> Result<f64> {
    let priors = PriorSpec::non_informative(spec);
    let post = Posterior::new(design, spec, &priors)?;
    let x = params.to_flat(post.layout())?;
    check_finite(&x)?;
    Ok(post.log_likelihood_flat(&x))
}

/// Sum of prior log densities; `-inf` outside the support (σ ≤ 0).
pub fn log_prior(params: &ParamVector, design: &Design, priors: &PriorSpec, spec: &ModelSpec) -> Result<f64> {
    let post = Posterior::new(design, spec, priors)?;
    let x = params.to_flat(post.layout())?;
    Ok(post.log_prior_flat(&x))
}

pub fn log_posterior(
    params: &ParamVector,
    design: &Design,
    spec: &ModelSpec,
    priors: &PriorSpec,
) -> Result<f64> {
    let post = Posterior::new(design, spec, priors)?;
    let x = params.to_flat(post.layout())?;
    let lp = post.log_prior_flat(&x);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    check_finite(&x)?;
    Ok(lp + post.log_likelihood_flat(&x))
}
