//! Estimator bias study: simulate seasons with a known home advantage under
//! two data-generating processes and compare the HA estimates of a
//! fixed-effects regression, a paired comparison model and the bivariate
//! Poisson goals model.

mod dgp;
mod estimators;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dgp::{
    gen_team_strengths, schedule_double_round_robin, simulate_bvn, simulate_bvp, truncated_normal,
    SimGame, SimSeason, TeamStrengths,
};
pub use estimators::{fit_bvp_model, fit_ols_fixed_effects, fit_paired_comparison, FitSettings, PairedComparison};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    Bvp,
    Bvn,
}

impl Dgp {
    pub fn as_str(self) -> &'static str {
        match self {
            Dgp::Bvp => "bvp",
            Dgp::Bvn => "bvn",
        }
    }

    /// Home advantage on the goal-difference scale implied by `T*` for a
    /// pair of average teams: `e^{T*} − 1` for bivariate Poisson, `T*` for
    /// the normal generator's Bernoulli extra goal.
    pub fn goal_difference_truth(self, t_star: f64) -> f64 {
        match self {
            Dgp::Bvp => t_star.exp() - 1.0,
            Dgp::Bvn => t_star,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    LinearRegression,
    PairedComparison,
    BivariatePoisson,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::LinearRegression,
        Estimator::PairedComparison,
        Estimator::BivariatePoisson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LinearRegression => "linear_regression",
            Estimator::PairedComparison => "paired_comparison",
            Estimator::BivariatePoisson => "bivariate_poisson",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub dgp: Dgp,
    pub rho_star: f64,
    pub t_star: f64,
    pub n_seasons: usize,
    pub n_teams: usize,
    pub seed: u64,
}

impl SimCell {
    pub fn validate(&self) -> Result<()> {
        if self.n_teams < 2 || self.n_teams % 2 != 0 {
            return Err(Error::Config(format!("team count must be even and at least 2, got {}", self.n_teams)));
        }
        if !(-1.0..=0.0).contains(&self.rho_star) {
            return Err(Error::Config(format!("rho* must lie in [-1, 0], got {}", self.rho_star)));
        }
        if !(self.t_star >= 0.0) {
            return Err(Error::Config(format!("T* must be non-negative, got {}", self.t_star)));
        }
        if self.n_seasons == 0 {
            return Err(Error::Config("cell needs at least one season".into()));
        }
        Ok(())
    }

    /// Simulate one season of this cell from its own stream.
    pub fn simulate(&self, season: usize) -> Result<SimSeason> {
        let mut rng = rng::stream(self.seed, &[season as u64, 0]);
        let strengths = gen_team_strengths(self.rho_star, self.n_teams, &mut rng)?;
        match self.dgp {
            Dgp::Bvp => simulate_bvp(&strengths, self.t_star, &mut rng),
            Dgp::Bvn => simulate_bvn(&strengths, self.t_star, &mut rng),
        }
    }
}

pub const GRID_RHO: [f64; 3] = [-0.8, -0.4, 0.0];
pub const GRID_T: [f64; 3] = [0.0, 0.25, 0.5];

/// The full 2 × 3 × 3 grid with per-cell seeds derived from `master_seed`.
pub fn standard_cells(n_seasons: usize, n_teams: usize, master_seed: u64) -> Vec<SimCell> {
    let mut cells = Vec::new();
    for (d, dgp) in [Dgp::Bvp, Dgp::Bvn].into_iter().enumerate() {
        for (r, &rho_star) in GRID_RHO.iter().enumerate() {
            for (t, &t_star) in GRID_T.iter().enumerate() {
                cells.push(SimCell {
                    dgp,
                    rho_star,
                    t_star,
                    n_seasons,
                    n_teams,
                    seed: rng::derive_seed(master_seed, &[d as u64, r as u64, t as u64]),
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonEstimate {
    pub cell: usize,
    pub season: usize,
    pub estimator: Estimator,
    pub estimate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub dgp: Dgp,
    pub rho_star: f64,
    pub t_star: f64,
    pub estimator: Estimator,
    pub mab: f64,
    pub mb: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl BiasRow {
    pub fn partial(&self) -> bool {
        self.n_failed > 0
    }
}

/// MB and MAB of the successful estimates against `truth`.
pub fn aggregate(cell: &SimCell, estimator: Estimator, estimates: &[Option<f64>], truth: f64) -> BiasRow {
    let ok: Vec<f64> = estimates.iter().flatten().map(|e| e - truth).collect();
    let n = ok.len() as f64;
    let (mb, mab) = if ok.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (ok.iter().sum::<f64>() / n, ok.iter().map(|e| e.abs()).sum::<f64>() / n)
    };
    BiasRow {
        dgp: cell.dgp,
        rho_star: cell.rho_star,
        t_star: cell.t_star,
        estimator,
        mab,
        mb,
        n_ok: ok.len(),
        n_failed: estimates.len() - ok.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGrid {
    pub rows: Vec<BiasRow>,
    pub seasons: Vec<SeasonEstimate>,
}

fn estimate(est: Estimator, season: &SimSeason, settings: &FitSettings, seed: u64) -> Result<f64> {
    match est {
        Estimator::LinearRegression => fit_ols_fixed_effects(season),
        Estimator::PairedComparison => fit_paired_comparison(season, settings, seed),
        Estimator::BivariatePoisson => fit_bvp_model(season, settings, seed),
    }
}

/// Run every (cell, season) task in parallel and aggregate per cell and
/// estimator. Season-level failures are recorded and leave the row partial.
pub fn bias_grid(cells: &[SimCell], estimators: &[Estimator], settings: &FitSettings) -> Result<BiasGrid> {
    for c in cells {
        c.validate()?;
    }
    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.n_seasons).map(move |s| (ci, s)))
        .collect();
    let per_task: Vec<Vec<SeasonEstimate>> = tasks
        .par_iter()
        .map(|&(ci, s)| {
            let cell = &cells[ci];
            let season = cell.simulate(s);
            estimators
                .iter()
                .enumerate()
                .map(|(k, &est)| {
                    let fit_seed = rng::derive_seed(cell.seed, &[s as u64, 1 + k as u64]);
                    let res = season
                        .as_ref()
                        .map_err(|e| Error::Estimation(e.to_string()))
                        .and_then(|sea| estimate(est, sea, settings, fit_seed));
                    SeasonEstimate {
                        cell: ci,
                        season: s,
                        estimator: est,
                        estimate: res.as_ref().ok().copied(),
                        error: res.err().map(|e| e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    let seasons: Vec<SeasonEstimate> = per_task.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let truth = cell.dgp.goal_difference_truth(cell.t_star);
        for &est in estimators {
            let vals: Vec<Option<f64>> = seasons
                .iter()
                .filter(|e| e.cell == ci && e.estimator == est)
                .map(|e| e.estimate)
                .collect();
            rows.push(aggregate(cell, est, &vals, truth));
        }
    }
    Ok(BiasGrid { rows, seasons })
}

impl BiasGrid {
    /// One bias row per line.
    pub fn write_rows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["dgp", "rho_star", "t_star", "estimator", "mab", "mb", "n_ok", "n_failed"])?;
        for r in &self.rows {
            wtr.write_record([
                r.dgp.as_str().to_string(),
                r.rho_star.to_string(),
                r.t_star.to_string(),
                r.estimator.as_str().to_string(),
                r.mab.to_string(),
                r.mb.to_string(),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Raw per-season estimates for auditing.
    pub fn write_seasons_csv<W: Write>(&self, cells: &[SimCell], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["dgp", "rho_star", "t_star", "season", "estimator", "estimate", "error"])?;
        for e in &self.seasons {
            let c = &cells[e.cell];
            wtr.write_record([
                c.dgp.as_str().to_string(),
                c.rho_star.to_string(),
                c.t_star.to_string(),
                e.season.to_string(),
                e.estimator.as_str().to_string(),
                e.estimate.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(dgp: Dgp, t_star: f64) -> SimCell {
        SimCell {
            dgp,
            rho_star: -0.4,
            t_star,
            n_seasons: 3,
            n_teams: 6,
            seed: 11,
        }
    }

    #[test]
    fn oracle_estimator_has_no_bias() {
        let c = cell(Dgp::Bvp, 0.25);
        let truth = c.dgp.goal_difference_truth(c.t_star);
        let r = aggregate(&c, Estimator::LinearRegression, &[Some(truth); 5], truth);
        assert_eq!((r.mab, r.mb), (0.0, 0.0));
        let r = aggregate(&c, Estimator::LinearRegression, &[Some(truth), None], truth);
        assert!(r.partial());
        assert_eq!(r.n_ok, 1);
    }

    #[test]
    fn cell_validation() {
        let mut c = cell(Dgp::Bvp, 0.0);
        c.n_teams = 5;
        assert!(c.validate().is_err());
        c.n_teams = 6;
        c.rho_star = 0.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_is_deterministic_and_marks_partial() {
        let cells = vec![cell(Dgp::Bvp, 0.0), cell(Dgp::Bvn, 0.25)];
        let a = bias_grid(&cells, &[Estimator::LinearRegression], &FitSettings::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| bias_grid(&cells, &[Estimator::LinearRegression], &FitSettings::default()))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.seasons.len(), 6);

        // a T* the normal generator does not support fails every season
        let bad = vec![SimCell { t_star: 0.3, ..cell(Dgp::Bvn, 0.0) }];
        let g = bias_grid(&bad, &[Estimator::LinearRegression], &FitSettings::default()).unwrap();
        assert!(g.rows[0].partial());
        assert_eq!(g.rows[0].n_ok, 0);
        let mut buf = Vec::new();
        g.write_seasons_csv(&bad, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("0, 0.25 or 0.5"));
    }

    #[test]
    fn standard_grid_shape() {
        let cells = standard_cells(25, 20, 1);
        assert_eq!(cells.len(), 18);
        let seeds: std::collections::BTreeSet<u64> = cells.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 18);
    }

    proptest! {
        #[test]
        fn mab_bounds_mb(v in proptest::collection::vec(proptest::option::of(-3.0f64..3.0), 1..50), truth in -1.0f64..1.0) {
            let r = aggregate(&cell(Dgp::Bvp, 0.0), Estimator::PairedComparison, &v, truth);
            if r.n_ok > 0 {
                prop_assert!(r.mab + 1e-12 >= r.mb.abs());
            }
            prop_assert_eq!(r.n_ok + r.n_failed, v.len());
        }

        #[test]
        fn schedule_pairs_twice_with_swapped_venues(n in 2usize..24) {
            let s = schedule_double_round_robin(n).unwrap();
            prop_assert_eq!(s.len(), n * (n - 1));
            let set: std::collections::BTreeSet<(usize, usize)> = s.iter().copied().collect();
            prop_assert_eq!(set.len(), s.len());
            for &(h, a) in &s {
                prop_assert!(h != a);
                prop_assert!(set.contains(&(a, h)));
            }
        }
    }
}
