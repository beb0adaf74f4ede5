//! Home-advantage summaries from posterior draws: league tables, decline
//! probabilities, goal-scale HA, binned densities and the joint
//! goals/yellow-card direction report.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Outcome;
use crate::sampler::{ess, r_hat, PosteriorDraws};

pub const PARAM_T: &str = "T";
pub const PARAM_T_PRIME: &str = "T_prime";
pub const DEFAULT_MAX_RHAT: f64 = 1.05;

/// Fraction of paired draws showing a decline in HA: `T' < T` for goals,
/// `T' > T` for yellow cards (where home advantage is negative).
pub fn prob_ha_decline(draws_t: &[f64], draws_t_prime: &[f64], outcome: Outcome) -> Result<f64> {
    if draws_t.len() != draws_t_prime.len() {
        return Err(Error::LengthMismatch {
            left: draws_t.len(),
            right: draws_t_prime.len(),
        });
    }
    if draws_t.is_empty() {
        return Err(Error::Evaluation("no draws".into()));
    }
    let hits = draws_t
        .iter()
        .zip(draws_t_prime)
        .filter(|(t, tp)| match outcome {
            Outcome::Goals => tp < t,
            Outcome::Yellows => tp > t,
        })
        .count();
    Ok(hits as f64 / draws_t.len() as f64)
}

/// HA in goals per game for a team pair of average strength.
pub fn goal_scale_ha(mu: f64, t: f64) -> f64 {
    (mu + t).exp() - mu.exp()
}

/// Goal-scale pre and post HA at the posterior means, with μ̄ the average
/// of the season intercepts.
pub fn league_goal_scale(draws: &PosteriorDraws) -> Result<(f64, f64)> {
    let mean_of = |name: &str| -> Result<f64> {
        let v = draws
            .pooled_by_name(name)
            .ok_or_else(|| Error::Evaluation(format!("draws have no `{name}`")))?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    let mus: Vec<usize> = (0..draws.dim())
        .filter(|&i| draws.names()[i].starts_with("mu["))
        .collect();
    if mus.is_empty() {
        return Err(Error::Evaluation("draws have no season intercepts".into()));
    }
    let mu_bar = mus
        .iter()
        .map(|&i| {
            let v = draws.pooled(i);
            v.iter().sum::<f64>() / v.len() as f64
        })
        .sum::<f64>()
        / mus.len() as f64;
    Ok((
        goal_scale_ha(mu_bar, mean_of(PARAM_T)?),
        goal_scale_ha(mu_bar, mean_of(PARAM_T_PRIME)?),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    /// Max R̂ above the threshold; numbers are reported but flagged.
    NotConverged,
    /// No fit supplied for the league; numeric fields are NaN.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueFitReport {
    pub league_id: String,
    pub outcome: Outcome,
    pub t_hat: f64,
    pub t_prime_hat: f64,
    /// `t_prime_hat - t_hat`.
    pub delta: f64,
    /// `100 * delta / |t_hat|`.
    pub pct_change: f64,
    pub p_decline: f64,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub status: FitStatus,
}

impl LeagueFitReport {
    pub fn from_draws(league_id: &str, draws: &PosteriorDraws, outcome: Outcome, max_rhat: f64) -> Result<Self> {
        let get = |name: &str| {
            draws
                .pooled_by_name(name)
                .ok_or_else(|| Error::Evaluation(format!("draws for `{league_id}` have no `{name}`")))
        };
        let t = get(PARAM_T)?;
        let tp = get(PARAM_T_PRIME)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (t_hat, t_prime_hat) = (mean(&t), mean(&tp));
        let delta = t_prime_hat - t_hat;
        let (worst_rhat, min_ess) = convergence(draws);
        Ok(Self {
            league_id: league_id.to_string(),
            outcome,
            t_hat,
            t_prime_hat,
            delta,
            pct_change: 100.0 * delta / t_hat.abs(),
            p_decline: prob_ha_decline(&t, &tp, outcome)?,
            max_rhat: worst_rhat,
            min_ess,
            status: if worst_rhat <= max_rhat {
                FitStatus::Ok
            } else {
                FitStatus::NotConverged
            },
        })
    }

    fn missing(league_id: &str, outcome: Outcome) -> Self {
        Self {
            league_id: league_id.to_string(),
            outcome,
            t_hat: f64::NAN,
            t_prime_hat: f64::NAN,
            delta: f64::NAN,
            pct_change: f64::NAN,
            p_decline: f64::NAN,
            max_rhat: f64::NAN,
            min_ess: f64::NAN,
            status: FitStatus::Missing,
        }
    }
}

/// Worst R̂ and smallest ESS over all parameters. Parameters whose
/// diagnostics are undefined (e.g. constant draws) are skipped; a single
/// chain yields `(inf, 0)`.
pub fn convergence(draws: &PosteriorDraws) -> (f64, f64) {
    let mut worst = f64::NEG_INFINITY;
    let mut min_ess = f64::INFINITY;
    for p in 0..draws.dim() {
        let chains = draws.param_chains(p);
        if let (Ok(r), Ok(e)) = (r_hat(&chains), ess(&chains)) {
            worst = worst.max(r);
            min_ess = min_ess.min(e);
        }
    }
    if worst == f64::NEG_INFINITY {
        (f64::INFINITY, 0.0)
    } else {
        (worst, min_ess)
    }
}

/// One row per expected league, sorted by `p_decline` descending with ties
/// broken by league id; leagues without a fit come last, flagged missing.
pub fn league_table(
    leagues: &[String],
    fits: &BTreeMap<String, PosteriorDraws>,
    outcome: Outcome,
    max_rhat: f64,
) -> Result<Vec<LeagueFitReport>> {
    let mut ids: BTreeSet<&String> = leagues.iter().collect();
    ids.extend(fits.keys());
    let mut rows = ids
        .into_iter()
        .map(|id| match fits.get(id) {
            Some(d) => LeagueFitReport::from_draws(id, d, outcome, max_rhat),
            None => Ok(LeagueFitReport::missing(id, outcome)),
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        let key = |r: &LeagueFitReport| if r.p_decline.is_nan() { f64::NEG_INFINITY } else { r.p_decline };
        key(b).total_cmp(&key(a)).then_with(|| a.league_id.cmp(&b.league_id))
    });
    Ok(rows)
}

pub fn write_league_table<W: Write>(rows: &[LeagueFitReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "league_id",
        "outcome",
        "t_hat",
        "t_prime_hat",
        "delta",
        "pct_change",
        "p_decline",
        "max_rhat",
        "min_ess",
        "status",
    ])?;
    for r in rows {
        let status = match r.status {
            FitStatus::Ok => "ok",
            FitStatus::NotConverged => "not_converged",
            FitStatus::Missing => "missing",
        };
        wtr.write_record([
            r.league_id.clone(),
            r.outcome.as_str().to_string(),
            fmt(r.t_hat),
            fmt(r.t_prime_hat),
            fmt(r.delta),
            fmt(r.pct_change),
            fmt(r.p_decline),
            fmt(r.max_rhat),
            fmt(r.min_ess),
            status.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub left: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub parameter: String,
    pub bins: Vec<DensityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityExport {
    /// `T`, `T_prime` and `T_minus_T_prime`, in that order.
    pub tables: Vec<DensityTable>,
    /// Raw `T - T'` per pooled draw.
    pub diff_draws: Vec<f64>,
}

/// Equal-width histogram normalized so that Σ height·width = 1.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<DensityBin>> {
    if bins < 10 {
        return Err(Error::Config(format!("need at least 10 bins, got {bins}")));
    }
    if values.is_empty() {
        return Err(Error::Evaluation("no draws to bin".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Evaluation("non-finite draws".into()));
    }
    let (start, width) = if hi > lo {
        (lo, (hi - lo) / bins as f64)
    } else {
        // point mass: centre it in the middle bin
        let w = 1.0 / bins as f64;
        (lo - w * (bins / 2) as f64 - w / 2.0, w)
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - start) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| DensityBin {
            left: start + k as f64 * width,
            width,
            height: c as f64 / (n * width),
        })
        .collect())
}

pub fn density_export(draws: &PosteriorDraws, bins: usize) -> Result<DensityExport> {
    let get = |name: &str| {
        draws
            .pooled_by_name(name)
            .ok_or_else(|| Error::Evaluation(format!("draws have no `{name}`")))
    };
    let t = get(PARAM_T)?;
    let tp = get(PARAM_T_PRIME)?;
    let diff: Vec<f64> = t.iter().zip(&tp).map(|(a, b)| a - b).collect();
    let tables = [(PARAM_T, &t), (PARAM_T_PRIME, &tp), ("T_minus_T_prime", &diff)]
        .into_iter()
        .map(|(name, v)| {
            Ok(DensityTable {
                parameter: name.to_string(),
                bins: histogram(v, bins)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityExport {
        tables,
        diff_draws: diff,
    })
}

impl DensityExport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["parameter", "left", "width", "height"])?;
        for t in &self.tables {
            for b in &t.bins {
                wtr.write_record([
                    t.parameter.clone(),
                    b.left.to_string(),
                    b.width.to_string(),
                    b.height.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-league arrow from pre to post posterior means, yellows on x and goals on y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub league_id: String,
    pub yellows_pre: f64,
    pub goals_pre: f64,
    pub yellows_post: f64,
    pub goals_post: f64,
    pub goals_decline: bool,
    pub yellows_decline: bool,
}

/// League counts by direction of HA change in each outcome. "Up" means no
/// decline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub both_decline: usize,
    pub goals_up_yellows_down: usize,
    pub both_up: usize,
    pub goals_down_yellows_up: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub arrows: Vec<Arrow>,
    pub counts: QuadrantCounts,
}

pub fn joint_quadrants(goals: &[LeagueFitReport], yellows: &[LeagueFitReport]) -> Result<JointReport> {
    let g: BTreeMap<&str, &LeagueFitReport> = goals.iter().map(|r| (r.league_id.as_str(), r)).collect();
    let y: BTreeMap<&str, &LeagueFitReport> = yellows.iter().map(|r| (r.league_id.as_str(), r)).collect();
    if g.len() != goals.len() || y.len() != yellows.len() {
        return Err(Error::Evaluation("duplicate league in report set".into()));
    }
    if !g.keys().eq(y.keys()) {
        let only: Vec<&str> = g
            .keys()
            .filter(|k| !y.contains_key(*k))
            .chain(y.keys().filter(|k| !g.contains_key(*k)))
            .copied()
            .collect();
        return Err(Error::Evaluation(format!(
            "goals and yellow-card reports cover different leagues: {}",
            only.join(", ")
        )));
    }
    let mut counts = QuadrantCounts::default();
    let mut arrows = Vec::with_capacity(g.len());
    for (id, gr) in g {
        let yr = y[id];
        if gr.status == FitStatus::Missing || yr.status == FitStatus::Missing {
            return Err(Error::Evaluation(format!("league `{id}` lacks a fit")));
        }
        let goals_decline = gr.t_prime_hat < gr.t_hat;
        let yellows_decline = yr.t_prime_hat > yr.t_hat;
        match (goals_decline, yellows_decline) {
            (true, true) => counts.both_decline += 1,
            (false, true) => counts.goals_up_yellows_down += 1,
            (false, false) => counts.both_up += 1,
            (true, false) => counts.goals_down_yellows_up += 1,
        }
        arrows.push(Arrow {
            league_id: id.to_string(),
            yellows_pre: yr.t_hat,
            goals_pre: gr.t_hat,
            yellows_post: yr.t_prime_hat,
            goals_post: gr.t_prime_hat,
            goals_decline,
            yellows_decline,
        });
    }
    Ok(JointReport { arrows, counts })
}

impl JointReport {
    pub fn write_arrows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for a in &self.arrows {
            wtr.serialize(a)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
