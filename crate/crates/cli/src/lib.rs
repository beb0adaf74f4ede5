//! Commands behind the `bphaven` binary: data validation, league fits
//! (including the two-stage empirical-Bayes pipeline), the bias-study grid
//! and the consolidated report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use bphaven_core::data::{self, LeagueConfig, LeagueRegistry, Match};
use bphaven_core::inference::{self, LeagueFitReport, DEFAULT_MAX_RHAT};
use bphaven_core::model::{
    build_design, empirical_bayes_priors, CovarianceMode, ModelSpec, Outcome, Posterior, PriorSpec,
};
use bphaven_core::rng::{derive_seed, label_key};
use bphaven_core::sampler::{ess, r_hat, run_chains, summarize, ChainConfig, PosteriorDraws};
use bphaven_core::simgrid::{self, Dgp, Estimator, FitSettings};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_LEAGUES: &str = include_str!("../../../config/leagues.json");

#[derive(Debug, Parser)]
#[command(name = "bphaven", version, about = "Bivariate Poisson home-advantage analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Check per-league sample counts against the league registry.
    Validate,
    /// Fit every selected league and write draws, summaries and the league table.
    Fit,
    /// Run the estimator bias grid.
    Simulate(SimulateArgs),
    /// Combine goals and yellow-card fits into tables, arrows and goal-scale HA.
    Report,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SimulateArgs {
    /// Restrict to one or more data-generating processes.
    #[arg(long, value_enum)]
    pub dgp: Vec<DgpArg>,
    /// Restrict to one or more simulated home advantages.
    #[arg(long = "t-star", visible_alias = "Tstar")]
    pub t_star: Vec<f64>,
    /// Seasons per cell; overrides the profile.
    #[arg(long)]
    pub seasons: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Directory holding match CSV files (and optionally leagues.json).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// League registry; defaults to <data-dir>/leagues.json, then the built-in registry.
    #[arg(long, global = true)]
    pub leagues_config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutcomeArg::Goals)]
    pub outcome: OutcomeArg,
    /// Defaults to zero for goals and free for yellow cards.
    #[arg(long, global = true, value_enum)]
    pub cov: Option<CovArg>,
    #[arg(long, global = true, env = "BPHAVEN_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Shorthand for `--profile paper-scale`.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    #[arg(long = "league", global = true)]
    pub leagues: Vec<String>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    /// Allow replacing existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true)]
    pub allow_mismatch: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Histogram bins for density exports.
    #[arg(long, global = true, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    Goals,
    Yellows,
}

impl From<OutcomeArg> for Outcome {
    fn from(o: OutcomeArg) -> Self {
        match o {
            OutcomeArg::Goals => Outcome::Goals,
            OutcomeArg::Yellows => Outcome::Yellows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Zero,
    Free,
}

impl From<CovArg> for CovarianceMode {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Zero => CovarianceMode::Zero,
            CovArg::Free => CovarianceMode::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpArg {
    Bvp,
    Bvn,
}

impl From<DgpArg> for Dgp {
    fn from(d: DgpArg) -> Self {
        match d {
            DgpArg::Bvp => Dgp::Bvp,
            DgpArg::Bvn => Dgp::Bvn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Reduced chains (3 × 3000, 1000 burn-in) and 25 seasons per grid cell.
    Desk,
    /// Long chains (7000 or 20000 iterations) and 100 seasons per grid cell.
    Full,
    /// Same as `full`.
    PaperScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Validate,
    Fit,
    Simulate,
    Report,
}

/// Everything that determines a command's outputs. Paths, `--force` and
/// the worker count are runtime details and are not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub outcome: Outcome,
    pub cov: CovarianceMode,
    pub seed: u64,
    pub profile: Profile,
    pub leagues: Vec<String>,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub allow_mismatch: bool,
    pub bins: usize,
    pub dgp: Vec<Dgp>,
    pub t_star: Vec<f64>,
    pub seasons_per_cell: Option<usize>,
    #[serde(skip)]
    pub data_dir: Option<PathBuf>,
    #[serde(skip)]
    pub leagues_config: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub force: bool,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Self {
        let c = &cli.common;
        let outcome: Outcome = c.outcome.into();
        let (command, sim) = match &cli.command {
            CommandArgs::Validate => (CommandKind::Validate, SimulateArgs::default()),
            CommandArgs::Fit => (CommandKind::Fit, SimulateArgs::default()),
            CommandArgs::Simulate(s) => (CommandKind::Simulate, s.clone()),
            CommandArgs::Report => (CommandKind::Report, SimulateArgs::default()),
        };
        let mut leagues = c.leagues.clone();
        leagues.sort();
        leagues.dedup();
        Self {
            command,
            outcome,
            cov: c.cov.map(Into::into).unwrap_or(default_cov(outcome)),
            seed: c.seed.unwrap_or(DEFAULT_SEED),
            profile: if c.paper_scale { Profile::PaperScale } else { c.profile },
            leagues,
            chains: c.chains,
            iters: c.iters,
            burnin: c.burnin,
            allow_mismatch: c.allow_mismatch,
            bins: c.bins,
            dgp: sim.dgp.into_iter().map(Into::into).collect(),
            t_star: sim.t_star,
            seasons_per_cell: sim.seasons,
            data_dir: c.data_dir.clone(),
            leagues_config: c.leagues_config.clone(),
            out: c.out.clone(),
            force: c.force,
            workers: c.workers,
        }
    }

    fn full_scale(&self) -> bool {
        self.profile != Profile::Desk
    }

    /// Chain settings for a league fit under the profile and overrides.
    pub fn fit_chains(&self, cov: CovarianceMode) -> (usize, usize, usize) {
        let base = match (self.full_scale(), cov) {
            (false, _) => (3, 3000, 1000),
            (true, CovarianceMode::Zero) => (3, 7000, 2000),
            (true, CovarianceMode::Free) => (3, 20000, 10000),
        };
        (
            self.chains.unwrap_or(base.0),
            self.iters.unwrap_or(base.1),
            self.burnin.unwrap_or(base.2),
        )
    }

    pub fn grid_fit_settings(&self) -> FitSettings {
        let d = FitSettings::default();
        FitSettings {
            n_chains: self.chains.unwrap_or(d.n_chains),
            iterations: self.iters.unwrap_or(d.iterations),
            burn_in: self.burnin.unwrap_or(d.burn_in),
        }
    }

    pub fn seasons_per_cell(&self) -> usize {
        self.seasons_per_cell
            .unwrap_or(if self.full_scale() { 100 } else { 25 })
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn default_cov(outcome: Outcome) -> CovarianceMode {
    match outcome {
        Outcome::Goals => CovarianceMode::Zero,
        Outcome::Yellows => CovarianceMode::Free,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub config: RunConfig,
    /// Output file name → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Writes files into the output directory, refusing to replace existing
/// ones without `force`, and records their hashes.
pub struct OutputDir {
    dir: PathBuf,
    force: bool,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn new(dir: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            force,
            written: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails early if any of `names` exists and `force` is off.
    pub fn check_free(&self, names: &[String]) -> Result<()> {
        if self.force {
            return Ok(());
        }
        let taken: Vec<&String> = names.iter().filter(|n| self.path(n).exists()).collect();
        if !taken.is_empty() {
            bail!(
                "output files already exist in {} (use --force to replace): {}",
                self.dir.display(),
                taken.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        if p.exists() && !self.force {
            bail!("{} exists (use --force to replace)", p.display());
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> bphaven_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(
        mut self,
        manifest_name: &str,
        cfg: &RunConfig,
        dataset_hash: Option<String>,
        warnings: Vec<String>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "bphaven".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
            dataset_hash,
            config: cfg.clone(),
            outputs: self.written.clone(),
            warnings,
        };
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        self.write(manifest_name, &bytes)?;
        Ok(manifest)
    }
}

pub struct Dataset {
    pub registry: LeagueRegistry,
    pub matches: Vec<Match>,
    pub rejections: usize,
    pub hash: String,
}

pub fn load_registry(cfg: &RunConfig) -> Result<LeagueRegistry> {
    if let Some(p) = &cfg.leagues_config {
        return LeagueRegistry::from_json_file(p).with_context(|| format!("reading {}", p.display()));
    }
    if let Some(dir) = &cfg.data_dir {
        let p = dir.join("leagues.json");
        if p.exists() {
            return LeagueRegistry::from_json_file(&p).with_context(|| format!("reading {}", p.display()));
        }
    }
    Ok(LeagueRegistry::from_json_str(DEFAULT_LEAGUES)?)
}

/// Every `*.csv` in the data directory, in file-name order, plus a hash of
/// their names and contents.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| anyhow!("--data-dir is required for this command"))?;
    if !dir.is_dir() {
        bail!("data directory {} does not exist", dir.display());
    }
    let registry = load_registry(cfg)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no match CSV files found in {}", dir.display());
    }
    let mut hasher = Sha256::new();
    let mut matches = Vec::new();
    let mut rejections = 0;
    for f in &files {
        let bytes = fs::read(f)?;
        let name = f.file_name().unwrap_or_default().to_string_lossy();
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
        let ing = data::load_matches_from_reader(bytes.as_slice(), &registry.leagues, &Default::default())
            .with_context(|| format!("reading {}", f.display()))?;
        for r in &ing.report.rejections {
            warn!(file = %f.display(), row = r.row, reason = %r.reason, "row rejected");
        }
        rejections += ing.report.rejections.len();
        matches.extend(ing.matches);
    }
    matches.sort_by(|a, b| {
        (a.date, &a.home, &a.away, &a.league).cmp(&(b.date, &b.home, &b.away, &b.league))
    });
    Ok(Dataset {
        registry,
        matches,
        rejections,
        hash: hex::encode(hasher.finalize()),
    })
}

fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building worker pool")?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Entry point used by `main`; returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    run_in_pool(cfg.workers, || match cfg.command {
        CommandKind::Validate => cmd_validate(cfg),
        CommandKind::Fit => cmd_fit(cfg).map(|_| 0),
        CommandKind::Simulate => cmd_simulate(cfg).map(|_| 0),
        CommandKind::Report => cmd_report(cfg).map(|_| 0),
    })?
}

#[derive(Debug, Serialize)]
struct ValidationOutput<'a> {
    rows_rejected: usize,
    matches: usize,
    report: &'a data::ValidationReport,
    correlations: BTreeMap<String, data::LeagueCorrelations>,
}

/// Writes `validation.json`; exit code 2 on count mismatches unless
/// mismatches are allowed.
pub fn cmd_validate(cfg: &RunConfig) -> Result<i32> {
    let ds = load_dataset(cfg)?;
    let report = data::validate_counts(&ds.matches, &ds.registry);
    let mut out = OutputDir::new(&cfg.out, cfg.force)?;
    out.check_free(&["validation.json".into(), "validate.manifest.json".into()])?;
    let body = ValidationOutput {
        rows_rejected: ds.rejections,
        matches: ds.matches.len(),
        report: &report,
        correlations: data::observed_correlations(&ds.matches),
    };
    out.write("validation.json", &serde_json::to_vec_pretty(&body)?)?;
    let warnings: Vec<String> = report
        .mismatches
        .iter()
        .map(|m| format!("{} {}: expected {}, computed {}", m.league, m.field, m.expected, m.computed))
        .collect();
    for w in &warnings {
        warn!("{w}");
    }
    out.finish("validate.manifest.json", cfg, Some(ds.hash), warnings)?;
    if report.passed {
        info!("all league counts match");
        Ok(0)
    } else if cfg.allow_mismatch {
        warn!("count mismatches allowed by flag");
        Ok(0)
    } else {
        Ok(2)
    }
}

pub fn artifact_stem(league: &str, outcome: Outcome, cov: CovarianceMode) -> String {
    format!("{league}_{}_{}", outcome.as_str(), cov.as_str())
}

pub fn table_name(outcome: Outcome, cov: CovarianceMode) -> String {
    format!("{}_{}.league_table.csv", outcome.as_str(), cov.as_str())
}

/// Per-parameter summary with convergence diagnostics.
pub fn write_summary_csv(draws: &PosteriorDraws, buf: &mut Vec<u8>) -> bphaven_core::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["parameter", "mean", "sd", "q2_5", "q25", "q50", "q75", "q97_5", "rhat", "ess"])?;
    for (p, s) in summarize(draws).into_iter().enumerate() {
        let chains = draws.param_chains(p);
        let diag = |v: bphaven_core::Result<f64>| v.map_or_else(|_| "NA".to_string(), |x| x.to_string());
        w.write_record([
            s.name,
            s.mean.to_string(),
            s.sd.to_string(),
            s.q2_5.to_string(),
            s.q25.to_string(),
            s.q50.to_string(),
            s.q75.to_string(),
            s.q97_5.to_string(),
            diag(r_hat(&chains)),
            diag(ess(&chains)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `parameter → posterior mean` from a summary CSV.
pub fn read_summary_means(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or_default().to_string();
        let mean: f64 = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("bad mean for {name} in {}", path.display()))?;
        out.insert(name, mean);
    }
    Ok(out)
}

pub struct LeagueFit {
    pub league_id: String,
    pub draws: PosteriorDraws,
}

/// Fit one league's model. Seasons without data for this outcome are
/// dropped from the design.
pub fn fit_league(
    matches: &[Match],
    league: &LeagueConfig,
    outcome: Outcome,
    cov: CovarianceMode,
    priors: &PriorSpec,
    chains: (usize, usize, usize),
    seed: u64,
) -> Result<PosteriorDraws> {
    let own: Vec<Match> = matches.iter().filter(|m| m.league == league.league_id).cloned().collect();
    let has = |s: &String| {
        own.iter().any(|m| {
            &m.season == s
                && match outcome {
                    Outcome::Goals => m.goals().is_some(),
                    Outcome::Yellows => m.yellows().is_some(),
                }
        })
    };
    let seasons: Vec<String> = league.seasons.iter().filter(|s| has(s)).cloned().collect();
    if seasons.is_empty() {
        bail!("league `{}` has no {} data", league.league_id, outcome.as_str());
    }
    let spec = ModelSpec {
        outcome,
        covariance_mode: cov,
        league_id: league.league_id.clone(),
        seasons,
        restart_date: Some(league.restart_date),
    };
    let design = build_design(&own, &spec)?;
    let post = Posterior::new(&design, &spec, priors)?;
    let seed = derive_seed(seed, &[label_key(&league.league_id), label_key(outcome.as_str()), label_key(cov.as_str())]);
    let cc = ChainConfig::new(chains.0, chains.1, chains.2, seed);
    Ok(run_chains(&post, &post.init_rule(0.1), &cc)?)
}

/// Selected leagues: those named with `--league`, else every registry
/// league present in the data.
pub fn select_leagues<'a>(cfg: &RunConfig, registry: &'a LeagueRegistry, matches: &[Match]) -> Result<Vec<&'a LeagueConfig>> {
    if cfg.leagues.is_empty() {
        return Ok(registry
            .leagues
            .iter()
            .filter(|l| matches.iter().any(|m| m.league == l.league_id))
            .collect());
    }
    cfg.leagues
        .iter()
        .map(|name| {
            registry
                .get(name)
                .or_else(|| registry.resolve(name))
                .ok_or_else(|| anyhow!("unknown league `{name}`"))
        })
        .collect()
}

/// Empirical-Bayes priors from the stage-1 (λ3 = 0) summaries found in the
/// output directory. Every league being fitted must have one.
pub fn stage_two_priors(
    cfg: &RunConfig,
    registry: &LeagueRegistry,
    fitting: &[&LeagueConfig],
) -> Result<bphaven_core::model::EmpiricalBayes> {
    let mut stage1 = BTreeMap::new();
    for l in &registry.leagues {
        let p = cfg
            .out
            .join(format!("{}.summary.csv", artifact_stem(&l.league_id, cfg.outcome, CovarianceMode::Zero)));
        if p.exists() {
            let m = read_summary_means(&p)?;
            let t = m.get("T").copied().ok_or_else(|| anyhow!("{} lacks T", p.display()))?;
            let tp = m.get("T_prime").copied().ok_or_else(|| anyhow!("{} lacks T_prime", p.display()))?;
            stage1.insert(l.league_id.clone(), (t, tp));
        }
    }
    let missing: Vec<&str> = fitting
        .iter()
        .filter(|l| !stage1.contains_key(&l.league_id))
        .map(|l| l.league_id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "stage-1 (--cov zero) {} fits missing for: {}; run them first into {}",
            cfg.outcome.as_str(),
            missing.join(", "),
            cfg.out.display()
        );
    }
    Ok(empirical_bayes_priors(&stage1, cfg.outcome)?)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<LeagueFitReport>> {
    let ds = load_dataset(cfg)?;
    let leagues = select_leagues(cfg, &ds.registry, &ds.matches)?;
    if leagues.is_empty() {
        bail!("no registry league has data in the data directory");
    }
    let mut out = OutputDir::new(&cfg.out, cfg.force)?;
    let (outcome, cov) = (cfg.outcome, cfg.cov);
    let manifest_name = format!("{}_{}.manifest.json", outcome.as_str(), cov.as_str());
    let eb_name = format!("{}_{}.eb_priors.json", outcome.as_str(), cov.as_str());
    let mut planned = vec![manifest_name.clone(), table_name(outcome, cov)];
    for l in &leagues {
        let stem = artifact_stem(&l.league_id, outcome, cov);
        planned.extend(["summary", "density", "draws"].map(|k| format!("{stem}.{k}.csv")));
    }
    if cov == CovarianceMode::Free {
        planned.push(eb_name.clone());
    }
    out.check_free(&planned)?;

    let base_priors = PriorSpec::non_informative(&ModelSpec {
        outcome,
        covariance_mode: cov,
        league_id: String::new(),
        seasons: vec![String::new()],
        restart_date: None,
    });
    let priors: BTreeMap<String, PriorSpec> = match cov {
        CovarianceMode::Zero => leagues.iter().map(|l| (l.league_id.clone(), base_priors.clone())).collect(),
        CovarianceMode::Free => {
            let eb = stage_two_priors(cfg, &ds.registry, &leagues)?;
            info!(pre_mean = eb.pre_mean, pre_scale = eb.pre_scale, post_mean = eb.post_mean, post_scale = eb.post_scale, "empirical-Bayes priors");
            out.write(&eb_name, &serde_json::to_vec_pretty(&eb)?)?;
            eb.priors
        }
    };
    let chains = cfg.fit_chains(cov);
    info!(leagues = leagues.len(), chains = chains.0, iterations = chains.1, burn_in = chains.2, "fitting");

    let results: Vec<(String, Result<PosteriorDraws>)> = leagues
        .par_iter()
        .map(|l| {
            let r = fit_league(&ds.matches, l, outcome, cov, &priors[&l.league_id], chains, cfg.seed);
            (l.league_id.clone(), r)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut fits = BTreeMap::new();
    for (id, r) in results {
        match r {
            Ok(draws) => {
                let stem = artifact_stem(&id, outcome, cov);
                out.write_with(&format!("{stem}.summary.csv"), |b| write_summary_csv(&draws, b))?;
                let dens = inference::density_export(&draws, cfg.bins)?;
                out.write_with(&format!("{stem}.density.csv"), |b| dens.write_csv(b))?;
                out.write_with(&format!("{stem}.draws.csv"), |b| draws.write_csv(b))?;
                fits.insert(id, draws);
            }
            Err(e) => {
                warn!(league = %id, error = %e, "fit failed");
                warnings.push(format!("{id}: fit failed: {e}"));
            }
        }
    }
    let ids: Vec<String> = leagues.iter().map(|l| l.league_id.clone()).collect();
    let table = inference::league_table(&ids, &fits, outcome, DEFAULT_MAX_RHAT)?;
    for r in &table {
        if r.status == inference::FitStatus::NotConverged {
            let w = format!("{}: max R-hat {:.4} above {}", r.league_id, r.max_rhat, DEFAULT_MAX_RHAT);
            warn!("{w}");
            warnings.push(w);
        }
    }
    out.write_with(&table_name(outcome, cov), |b| inference::write_league_table(&table, b))?;
    out.finish(&manifest_name, cfg, Some(ds.hash), warnings)?;
    Ok(table)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<simgrid::BiasGrid> {
    let mut out = OutputDir::new(&cfg.out, cfg.force)?;
    let names = ["bias_grid.csv", "bias_seasons.csv", "simulate.manifest.json"].map(String::from);
    out.check_free(&names)?;
    let cells: Vec<simgrid::SimCell> = simgrid::standard_cells(cfg.seasons_per_cell(), 20, cfg.seed)
        .into_iter()
        .filter(|c| cfg.dgp.is_empty() || cfg.dgp.contains(&c.dgp))
        .filter(|c| cfg.t_star.is_empty() || cfg.t_star.contains(&c.t_star))
        .collect();
    if cells.is_empty() {
        bail!("the --dgp/--t-star filters select no grid cell");
    }
    info!(cells = cells.len(), seasons = cfg.seasons_per_cell(), "running bias grid");
    let grid = simgrid::bias_grid(&cells, &Estimator::ALL, &cfg.grid_fit_settings())?;
    let warnings: Vec<String> = grid
        .rows
        .iter()
        .filter(|r| r.partial())
        .map(|r| {
            format!(
                "{} rho*={} T*={} {}: {} of {} seasons failed",
                r.dgp.as_str(),
                r.rho_star,
                r.t_star,
                r.estimator.as_str(),
                r.n_failed,
                r.n_ok + r.n_failed
            )
        })
        .collect();
    out.write_with("bias_grid.csv", |b| grid.write_rows_csv(b))?;
    out.write_with("bias_seasons.csv", |b| grid.write_seasons_csv(&cells, b))?;
    out.finish("simulate.manifest.json", cfg, None, warnings)?;
    Ok(grid)
}

/// Parse a league table written by [`inference::write_league_table`].
pub fn read_league_table(path: &Path) -> Result<Vec<LeagueFitReport>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let num = |s: &str| -> Result<f64> {
        if s == "NA" {
            Ok(f64::NAN)
        } else {
            s.parse().with_context(|| format!("bad number `{s}` in {}", path.display()))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let field = |i: usize| r.get(i).unwrap_or_default();
        rows.push(LeagueFitReport {
            league_id: field(0).to_string(),
            outcome: match field(1) {
                "goals" => Outcome::Goals,
                "yellows" => Outcome::Yellows,
                o => bail!("unknown outcome `{o}` in {}", path.display()),
            },
            t_hat: num(field(2))?,
            t_prime_hat: num(field(3))?,
            delta: num(field(4))?,
            pct_change: num(field(5))?,
            p_decline: num(field(6))?,
            max_rhat: num(field(7))?,
            min_ess: num(field(8))?,
            status: match field(9) {
                "ok" => inference::FitStatus::Ok,
                "not_converged" => inference::FitStatus::NotConverged,
                "missing" => inference::FitStatus::Missing,
                s => bail!("unknown status `{s}` in {}", path.display()),
            },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalScaleRow {
    pub league_id: String,
    pub mu_bar: f64,
    pub pre: f64,
    pub post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub goals: Vec<LeagueFitReport>,
    pub yellows: Option<Vec<LeagueFitReport>>,
    pub quadrants: Option<inference::QuadrantCounts>,
    pub goal_scale: Vec<GoalScaleRow>,
    /// Averages of the per-league goal-scale HA.
    pub goal_scale_mean_pre: f64,
    pub goal_scale_mean_post: f64,
}

/// Reads `goals_zero` and `yellows_free` fits from the output directory.
/// Without yellow-card fits the bundle is goals-only.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportBundle> {
    let goals_path = cfg.out.join(table_name(Outcome::Goals, CovarianceMode::Zero));
    let yellows_path = cfg.out.join(table_name(Outcome::Yellows, CovarianceMode::Free));
    if !goals_path.exists() {
        bail!("missing fit artifacts: {}", goals_path.display());
    }
    let mut out = OutputDir::new(&cfg.out, cfg.force)?;
    let names = ["report.json", "report.arrows.csv", "report.manifest.json"].map(String::from);
    out.check_free(&names)?;
    let mut warnings = Vec::new();
    let goals = read_league_table(&goals_path)?;
    let yellows = if yellows_path.exists() {
        Some(read_league_table(&yellows_path)?)
    } else {
        let w = format!("no yellow-card fits ({}); goals-only report", table_name(Outcome::Yellows, CovarianceMode::Free));
        warn!("{w}");
        warnings.push(w);
        None
    };
    let mut goal_scale = Vec::new();
    for r in goals.iter().filter(|r| r.status != inference::FitStatus::Missing) {
        let p = cfg
            .out
            .join(format!("{}.summary.csv", artifact_stem(&r.league_id, Outcome::Goals, CovarianceMode::Zero)));
        let means = read_summary_means(&p)?;
        let mus: Vec<f64> = means
            .iter()
            .filter(|(k, _)| k.starts_with("mu["))
            .map(|(_, v)| *v)
            .collect();
        if mus.is_empty() {
            bail!("{} has no season intercepts", p.display());
        }
        let mu_bar = mus.iter().sum::<f64>() / mus.len() as f64;
        goal_scale.push(GoalScaleRow {
            league_id: r.league_id.clone(),
            mu_bar,
            pre: inference::goal_scale_ha(mu_bar, r.t_hat),
            post: inference::goal_scale_ha(mu_bar, r.t_prime_hat),
        });
    }
    let n = goal_scale.len().max(1) as f64;
    let goal_scale_mean_pre = goal_scale.iter().map(|g| g.pre).sum::<f64>() / n;
    let goal_scale_mean_post = goal_scale.iter().map(|g| g.post).sum::<f64>() / n;
    let joint = match &yellows {
        Some(y) => {
            let j = inference::joint_quadrants(&goals, y)?;
            out.write_with("report.arrows.csv", |b| j.write_arrows_csv(b))?;
            Some(j)
        }
        None => None,
    };
    let bundle = ReportBundle {
        goals,
        yellows,
        quadrants: joint.map(|j| j.counts),
        goal_scale,
        goal_scale_mean_pre,
        goal_scale_mean_post,
    };
    out.write("report.json", &serde_json::to_vec_pretty(&bundle)?)?;
    out.finish("report.manifest.json", cfg, None, warnings)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::from_cli(&Cli::try_parse_from(args).unwrap())
    }

    #[test]
    fn defaults_and_overrides() {
        let c = parse(&["bphaven", "fit", "--outcome", "yellows"]);
        assert_eq!(c.cov, CovarianceMode::Free);
        assert_eq!(c.fit_chains(c.cov), (3, 3000, 1000));
        let c = parse(&["bphaven", "fit", "--paper-scale", "--iters", "500"]);
        assert_eq!(c.cov, CovarianceMode::Zero);
        assert_eq!(c.fit_chains(CovarianceMode::Zero), (3, 500, 2000));
        assert_eq!(c.fit_chains(CovarianceMode::Free).0, 3);
        let c = parse(&["bphaven", "simulate", "--dgp", "bvp", "--Tstar", "0"]);
        assert_eq!(c.dgp, vec![Dgp::Bvp]);
        assert_eq!(c.t_star, vec![0.0]);
        assert_eq!(c.seasons_per_cell(), 25);
        assert_eq!(parse(&["bphaven", "simulate", "--profile", "full"]).seasons_per_cell(), 100);
    }

    #[test]
    fn config_round_trips_without_runtime_fields() {
        let c = parse(&["bphaven", "fit", "--seed", "7", "--workers", "3", "--league", "b", "--league", "a", "--out", "/tmp/x"]);
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.leagues, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(back.workers, None);
        let d = parse(&["bphaven", "fit", "--seed", "7", "--workers", "1", "--league", "a", "--league", "b"]);
        assert_eq!(c.config_hash(), d.config_hash());
    }

    #[test]
    fn output_dir_refuses_overwrite() {
        let tmp = tempfile::tempdir().unwrap();
        let mut o = OutputDir::new(tmp.path(), false).unwrap();
        o.write("a.txt", b"1").unwrap();
        assert!(o.write("a.txt", b"2").is_err());
        assert!(o.check_free(&["a.txt".into()]).is_err());
        let mut f = OutputDir::new(tmp.path(), true).unwrap();
        f.write("a.txt", b"2").unwrap();
        assert_eq!(fs::read(tmp.path().join("a.txt")).unwrap(), b"2");
    }

    #[test]
    fn built_in_registry_loads() {
        let r = LeagueRegistry::from_json_str(DEFAULT_LEAGUES).unwrap();
        assert_eq!(r.leagues.len(), 17);
        let la2 = r.get("spanish_la_liga_2").unwrap().expected.unwrap();
        assert_eq!(la2.yellows_pre, 2191);
        let ru = r.get("russian_premier_liga").unwrap().expected.unwrap();
        assert_eq!(ru.yellows_post, 60);
    }

    #[test]
    fn empty_data_dir_is_descriptive() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = parse(&["bphaven", "validate"]);
        c.data_dir = Some(tmp.path().to_path_buf());
        let err = load_dataset(&c).err().unwrap().to_string();
        assert!(err.contains("no match CSV files"), "{err}");
    }
}
