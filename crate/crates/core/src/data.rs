//! Match ingestion, restart-date splits, sample-size validation.
//!
//! Canonical CSV layout: `league,season,date,home,away,hg,ag,hy,ay` with ISO
//! dates and empty cells for missing counts. Common upstream column names are
//! mapped onto the canonical ones (see [`ColumnMap`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub league: String,
    pub season: String,
    pub date: NaiveDate,
    pub home: String,
    pub away: String,
    pub home_goals: Option<u32>,
    pub away_goals: Option<u32>,
    pub home_yellows: Option<u32>,
    pub away_yellows: Option<u32>,
}

impl Match {
    pub fn goals(&self) -> Option<(u32, u32)> {
        Some((self.home_goals?, self.away_goals?))
    }

    pub fn yellows(&self) -> Option<(u32, u32)> {
        Some((self.home_yellows?, self.away_yellows?))
    }

    /// Played on or after the restart date.
    pub fn is_post(&self, restart: NaiveDate) -> bool {
        self.date >= restart
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub goals_pre: usize,
    pub goals_post: usize,
    pub yellows_pre: usize,
    pub yellows_post: usize,
    pub team_seasons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub season: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueConfig {
    pub league_id: String,
    pub display_name: String,
    pub country: String,
    pub tier: u8,
    pub restart_date: NaiveDate,
    /// Seasons admitted into the analysis; rows from other seasons are rejected.
    pub seasons: Vec<String>,
    #[serde(default)]
    pub season_windows: Vec<SeasonWindow>,
    #[serde(default)]
    pub expected: Option<ExpectedCounts>,
    /// Extra spellings of the league name found in upstream files.
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl LeagueConfig {
    fn answers_to(&self, name: &str) -> bool {
        let n = name.trim();
        n.eq_ignore_ascii_case(&self.league_id)
            || n.eq_ignore_ascii_case(&self.display_name)
            || self.aliases.iter().any(|a| n.eq_ignore_ascii_case(a))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeagueRegistry {
    pub leagues: Vec<LeagueConfig>,
}

impl LeagueRegistry {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let reg: Self = serde_json::from_reader(File::open(path)?)?;
        reg.check()?;
        Ok(reg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let reg: Self = serde_json::from_str(s)?;
        reg.check()?;
        Ok(reg)
    }

    fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for l in &self.leagues {
            if !seen.insert(l.league_id.as_str()) {
                return Err(Error::Config(format!("duplicate league id {}", l.league_id)));
            }
            if l.seasons.is_empty() {
                return Err(Error::Config(format!("league {} lists no seasons", l.league_id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, league_id: &str) -> Option<&LeagueConfig> {
        self.leagues.iter().find(|l| l.league_id == league_id)
    }

    pub fn resolve(&self, name: &str) -> Option<&LeagueConfig> {
        self.leagues.iter().find(|l| l.answers_to(name))
    }
}

/// Header aliases for each canonical column, matched case-insensitively.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub league: Vec<&'static str>,
    pub season: Vec<&'static str>,
    pub date: Vec<&'static str>,
    pub home: Vec<&'static str>,
    pub away: Vec<&'static str>,
    pub home_goals: Vec<&'static str>,
    pub away_goals: Vec<&'static str>,
    pub home_yellows: Vec<&'static str>,
    pub away_yellows: Vec<&'static str>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            league: vec!["league", "league_name", "competition"],
            season: vec!["season"],
            date: vec!["date", "game_date", "match_date"],
            home: vec!["home", "home_team", "team_home"],
            away: vec!["away", "away_team", "team_away"],
            home_goals: vec!["hg", "home_goals", "home_score", "fthg"],
            away_goals: vec!["ag", "away_goals", "away_score", "ftag"],
            home_yellows: vec!["hy", "home_yellows", "home_yellow_cards", "home_yellow", "home_yc"],
            away_yellows: vec!["ay", "away_yellows", "away_yellow_cards", "away_yellow", "away_yc"],
        }
    }
}

struct Columns {
    league: Option<usize>,
    season: usize,
    date: usize,
    home: usize,
    away: usize,
    hg: Option<usize>,
    ag: Option<usize>,
    hy: Option<usize>,
    ay: Option<usize>,
}

impl ColumnMap {
    fn locate(&self, headers: &csv::StringRecord) -> Result<Columns> {
        let find = |names: &[&str]| {
            headers
                .iter()
                .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
        };
        let need = |names: &[&'static str]| {
            find(names).ok_or_else(|| Error::Data(format!("missing required column (one of {names:?})")))
        };
        Ok(Columns {
            league: find(&self.league),
            season: need(&self.season)?,
            date: need(&self.date)?,
            home: need(&self.home)?,
            away: need(&self.away)?,
            hg: find(&self.home_goals),
            ag: find(&self.away_goals),
            hy: find(&self.home_yellows),
            ay: find(&self.away_yellows),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonCounts {
    pub matches: usize,
    pub goals_complete: usize,
    pub yellows_complete: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows_in: usize,
    pub matches_out: usize,
    pub rejections: Vec<Rejection>,
    /// league → season → counts
    pub counts: BTreeMap<String, BTreeMap<String, SeasonCounts>>,
}

#[derive(Debug, Clone)]
pub struct Ingestion {
    pub matches: Vec<Match>,
    pub report: IngestionReport,
}

/// Read one match file. When the file has no league column, every row is
/// attributed to the single league in `leagues`.
pub fn load_matches(path: &Path, leagues: &[LeagueConfig]) -> Result<Ingestion> {
    load_matches_from_reader(File::open(path)?, leagues, &ColumnMap::default())
}

pub fn load_matches_from_reader<R: Read>(
    reader: R,
    leagues: &[LeagueConfig],
    map: &ColumnMap,
) -> Result<Ingestion> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut report = IngestionReport::default();
    if headers.is_empty() {
        return Ok(Ingestion {
            matches: Vec::new(),
            report,
        });
    }
    let cols = map.locate(&headers)?;
    if cols.league.is_none() && leagues.len() != 1 {
        return Err(Error::Data(
            "file has no league column; exactly one league config is required".into(),
        ));
    }

    let mut matches = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        report.rows_in += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejections.push(Rejection {
                    row,
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        match parse_row(&rec, &cols, leagues) {
            Ok(m) => matches.push(m),
            Err(reason) => report.rejections.push(Rejection { row, reason }),
        }
    }

    matches.sort_by(|a, b| {
        (a.date, &a.home, &a.away, &a.league).cmp(&(b.date, &b.home, &b.away, &b.league))
    });
    for m in &matches {
        let c = report
            .counts
            .entry(m.league.clone())
            .or_default()
            .entry(m.season.clone())
            .or_default();
        c.matches += 1;
        c.goals_complete += m.goals().is_some() as usize;
        c.yellows_complete += m.yellows().is_some() as usize;
    }
    report.matches_out = matches.len();
    Ok(Ingestion { matches, report })
}

fn parse_row(
    rec: &csv::StringRecord,
    cols: &Columns,
    leagues: &[LeagueConfig],
) -> std::result::Result<Match, String> {
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let league = match cols.league {
        Some(i) => {
            let name = field(i);
            leagues
                .iter()
                .find(|l| l.answers_to(name))
                .ok_or_else(|| format!("unknown league `{name}`"))?
        }
        None => &leagues[0],
    };
    let season = field(cols.season).to_string();
    if !league.seasons.iter().any(|s| s == &season) {
        return Err(format!("season `{season}` not in the {} whitelist", league.league_id));
    }
    let raw_date = field(cols.date);
    let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
        .map_err(|_| format!("malformed date `{raw_date}`"))?;
    if let Some(w) = league.season_windows.iter().find(|w| w.season == season) {
        if date < w.start || date > w.end {
            return Err(format!("date {date} outside season {season} window"));
        }
    }
    let home = field(cols.home).to_string();
    let away = field(cols.away).to_string();
    if home.is_empty() || away.is_empty() {
        return Err("missing team name".into());
    }
    if home == away {
        return Err(format!("home and away team are both `{home}`"));
    }
    let count = |c: Option<usize>, what: &str| -> std::result::Result<Option<u32>, String> {
        let Some(i) = c else { return Ok(None) };
        let raw = field(i);
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            return Ok(None);
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("{what} `{raw}` is not a number"))?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(format!("{what} `{raw}` is not a non-negative integer"));
        }
        Ok(Some(v as u32))
    };
    Ok(Match {
        league: league.league_id.clone(),
        season,
        date,
        home,
        away,
        home_goals: count(cols.hg, "home goals")?,
        away_goals: count(cols.ag, "away goals")?,
        home_yellows: count(cols.hy, "home yellows")?,
        away_yellows: count(cols.ay, "away yellows")?,
    })
}

/// Partition by date: strictly before the restart date is pre, on or after is post.
pub fn split_pre_post(matches: &[Match], restart: NaiveDate) -> (Vec<Match>, Vec<Match>) {
    matches.iter().cloned().partition(|m| !m.is_post(restart))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub league: String,
    pub field: String,
    pub expected: usize,
    pub computed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeagueValidation {
    pub league: String,
    pub computed: ExpectedCounts,
    pub expected: Option<ExpectedCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub leagues: Vec<LeagueValidation>,
    pub mismatches: Vec<CountMismatch>,
    pub passed: bool,
}

/// Sample sizes for one league: goal- and yellow-complete matches split at the
/// restart date, plus distinct team-seasons in the goals sample.
pub fn compute_counts(matches: &[Match], league: &LeagueConfig) -> ExpectedCounts {
    let mut c = ExpectedCounts::default();
    let mut team_seasons = BTreeSet::new();
    for m in matches.iter().filter(|m| m.league == league.league_id) {
        let post = m.is_post(league.restart_date);
        if m.goals().is_some() {
            if post {
                c.goals_post += 1;
            } else {
                c.goals_pre += 1;
            }
            team_seasons.insert((m.season.as_str(), m.home.as_str()));
            team_seasons.insert((m.season.as_str(), m.away.as_str()));
        }
        if m.yellows().is_some() {
            if post {
                c.yellows_post += 1;
            } else {
                c.yellows_pre += 1;
            }
        }
    }
    c.team_seasons = team_seasons.len();
    c
}

pub fn validate_counts(matches: &[Match], registry: &LeagueRegistry) -> ValidationReport {
    let mut leagues = Vec::new();
    let mut mismatches = Vec::new();
    for cfg in &registry.leagues {
        let computed = compute_counts(matches, cfg);
        if let Some(exp) = cfg.expected {
            let pairs = [
                ("goals_pre", exp.goals_pre, computed.goals_pre),
                ("goals_post", exp.goals_post, computed.goals_post),
                ("yellows_pre", exp.yellows_pre, computed.yellows_pre),
                ("yellows_post", exp.yellows_post, computed.yellows_post),
                ("team_seasons", exp.team_seasons, computed.team_seasons),
            ];
            for (field, expected, got) in pairs {
                if expected != got {
                    mismatches.push(CountMismatch {
                        league: cfg.league_id.clone(),
                        field: field.into(),
                        expected,
                        computed: got,
                    });
                }
            }
        }
        leagues.push(LeagueValidation {
            league: cfg.league_id.clone(),
            computed,
            expected: cfg.expected,
        });
    }
    let passed = mismatches.is_empty();
    ValidationReport {
        leagues,
        mismatches,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueCorrelations {
    pub goals: Option<f64>,
    pub yellows: Option<f64>,
    pub goals_n: usize,
    pub yellows_n: usize,
    /// Reasons a correlation could not be computed.
    pub flags: Vec<String>,
}

/// Pearson correlation of home vs away counts per league.
pub fn observed_correlations(matches: &[Match]) -> BTreeMap<String, LeagueCorrelations> {
    let mut by_league: BTreeMap<&str, (Vec<(f64, f64)>, Vec<(f64, f64)>)> = BTreeMap::new();
    for m in matches {
        let e = by_league.entry(m.league.as_str()).or_default();
        if let Some((h, a)) = m.goals() {
            e.0.push((h as f64, a as f64));
        }
        if let Some((h, a)) = m.yellows() {
            e.1.push((h as f64, a as f64));
        }
    }
    by_league
        .into_iter()
        .map(|(league, (g, y))| {
            let mut flags = Vec::new();
            let goals = pearson(&g).map_err(|e| flags.push(format!("goals: {e}"))).ok();
            let yellows = pearson(&y)
                .map_err(|e| flags.push(format!("yellows: {e}")))
                .ok();
            (
                league.to_string(),
                LeagueCorrelations {
                    goals,
                    yellows,
                    goals_n: g.len(),
                    yellows_n: y.len(),
                    flags,
                },
            )
        })
        .collect()
}

fn pearson(xy: &[(f64, f64)]) -> std::result::Result<f64, &'static str> {
    if xy.len() < 2 {
        return Err("fewer than 2 complete matches");
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in xy {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err("degenerate variance");
    }
    Ok(sxy / (sxx * syy).sqrt())
}
