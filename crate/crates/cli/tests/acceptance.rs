//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Set `BPHAVEN_ACCEPTANCE_STRICT=1` to exit nonzero when any criterion
//! fails; otherwise the outcome is reported and the run exits cleanly.
//! Real-data criteria read the match files from `BPHAVEN_DATA_DIR`
//! (default `<workspace>/data`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::Rng;

use bphaven_cli::{cmd_fit, cmd_report, cmd_validate, load_dataset, Cli, RunConfig};
use bphaven_core::bpcore::{bp_log_pmf, bp_sample, BPParams};
use bphaven_core::data::{split_pre_post, validate_counts, Match};
use bphaven_core::inference::goal_scale_ha;
use bphaven_core::model::{empirical_bayes_priors, Outcome};
use bphaven_core::rng::stream;
use bphaven_core::sampler::{ess, r_hat, run_chains, Block, ChainConfig, InitRule, LogDensity, Transform};
use bphaven_core::simgrid::{
    aggregate, bias_grid, schedule_double_round_robin, standard_cells, Dgp, Estimator, FitSettings, SimCell,
};

type Verdict = Result<String, String>;

fn main() {
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("1 distribution exactness", c1_exactness),
        ("2 sampler correctness", c2_sampler),
        ("3 bias grid (desk scale)", c3_bias_grid),
        ("4 goals fit (real data)", c4_goals),
        ("5 yellows fit + empirical Bayes", c5_yellows),
        ("6 data validation", c6_validation),
        ("7 joint report quadrants", c7_quadrants),
        ("8 determinism across workers", c8_determinism),
        ("9 property suites", c9_properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|k| name.starts_with(k.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("PASS  {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", ran - failed, ran);
    let strict = std::env::var("BPHAVEN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

fn ln_poisson_direct(k: u32, l: f64) -> f64 {
    // e^{-l} l^k / k! by repeated multiplication
    let mut p = (-l).exp();
    for i in 1..=k {
        p *= l / i as f64;
    }
    p.ln()
}

fn poisson_direct(k: u32, l: f64) -> f64 {
    let mut p = (-l).exp();
    for i in 1..=k {
        p *= l / i as f64;
    }
    p
}

fn c1_exactness() -> Verdict {
    let t = Instant::now();
    let rates = [0.05, 0.3, 1.0, 1.7, 3.2, 6.0];
    let mut worst_ind = 0.0_f64;
    let mut worst_tri = 0.0_f64;
    for &l1 in &rates {
        for &l2 in &rates {
            for y1 in 0..=12 {
                for y2 in 0..=12 {
                    let got = bp_log_pmf(y1, y2, &BPParams::independent(l1, l2).unwrap());
                    let want = ln_poisson_direct(y1, l1) + ln_poisson_direct(y2, l2);
                    worst_ind = worst_ind.max((got - want).abs());
                }
            }
            for &l3 in &[0.01, 0.2, 0.9, 2.5] {
                let p = BPParams::new(l1, l2, l3).unwrap();
                for y1 in 0..=8u32 {
                    for y2 in 0..=8u32 {
                        // Y1 = X1 + X3, Y2 = X2 + X3
                        let brute: f64 = (0..=y1.min(y2))
                            .map(|k| poisson_direct(y1 - k, l1) * poisson_direct(y2 - k, l2) * poisson_direct(k, l3))
                            .sum();
                        worst_tri = worst_tri.max((bp_log_pmf(y1, y2, &p) - brute.ln()).abs());
                    }
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst_ind <= 1e-12, format!("independence error {worst_ind:.2e} > 1e-12"))?;
    check(worst_tri <= 1e-10, format!("trivariate error {worst_tri:.2e} > 1e-10"))?;
    check(secs < 1.0, format!("took {secs:.2}s"))?;
    Ok(format!("max |err| {worst_ind:.1e} (λ3=0), {worst_tri:.1e} (λ3>0)"))
}

// ---------------------------------------------------------------- 2

struct NormalNormal {
    y: Vec<f64>,
    prior_var: f64,
}

impl LogDensity for NormalNormal {
    fn dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * x[0] * x[0] / self.prior_var - 0.5 * self.y.iter().map(|y| (y - x[0]).powi(2)).sum::<f64>()
    }
}

struct BetaBinomial {
    a: f64,
    b: f64,
    k: f64,
    n: f64,
}

impl LogDensity for BetaBinomial {
    fn dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> Vec<String> {
        vec!["p".into()]
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        let p = x[0];
        if !(p > 0.0 && p < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0 + self.k) * p.ln() + (self.b - 1.0 + self.n - self.k) * (1.0 - p).ln()
    }
    fn blocks(&self) -> Vec<Block> {
        vec![Block {
            name: "p".into(),
            indices: vec![0],
            transform: Transform::Logit,
            initial_step: 0.5,
        }]
    }
}

/// Mean and SD against closed form, within 4 Monte-Carlo SEs.
fn conjugate_check<T: LogDensity>(target: &T, init: f64, mean: f64, sd: f64, seed: u64) -> Result<String, String> {
    let cc = ChainConfig::new(2, 7000, 2000, seed);
    let d = run_chains(target, &InitRule::new(vec![init], 0.0), &cc).map_err(|e| e.to_string())?;
    let chains = d.param_chains(0);
    check(chains[0].len() == 5000, "expected 5000 retained draws per chain")?;
    let rh = r_hat(&chains).map_err(|e| e.to_string())?;
    let n_eff = ess(&chains).map_err(|e| e.to_string())?;
    let pooled = d.pooled(0);
    let n = pooled.len() as f64;
    let m = pooled.iter().sum::<f64>() / n;
    let s = (pooled.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mcse_mean = s / n_eff.sqrt();
    // delta method on the squared deviations
    let sq: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| (x - m).powi(2)).collect()).collect();
    let sq_pooled: Vec<f64> = sq.concat();
    let sq_mean = sq_pooled.iter().sum::<f64>() / n;
    let sq_sd = (sq_pooled.iter().map(|v| (v - sq_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mcse_sd = sq_sd / ess(&sq).map_err(|e| e.to_string())?.sqrt() / (2.0 * s);
    check((m - mean).abs() <= 4.0 * mcse_mean, format!("mean {m:.5} vs {mean:.5} (MCSE {mcse_mean:.5})"))?;
    check((s - sd).abs() <= 4.0 * mcse_sd, format!("sd {s:.5} vs {sd:.5} (MCSE {mcse_sd:.5})"))?;
    check(rh <= 1.02, format!("R-hat {rh:.4}"))?;
    check(n_eff >= 500.0, format!("ESS {n_eff:.0}"))?;
    Ok(format!("R-hat {rh:.3}, ESS {n_eff:.0}"))
}

fn c2_sampler() -> Verdict {
    let t = Instant::now();
    let mut rng = stream(11, &[]);
    let y: Vec<f64> = (0..20).map(|_| 1.5 + rng.random_range(-2.0..2.0)).collect();
    let prior_var = 10.0;
    let post_var = 1.0 / (1.0 / prior_var + y.len() as f64);
    let post_mean = post_var * y.iter().sum::<f64>();
    let nn = conjugate_check(&NormalNormal { y, prior_var }, 0.0, post_mean, post_var.sqrt(), 2)
        .map_err(|e| format!("normal-normal: {e}"))?;
    // Beta(2, 3) prior, 7 of 20 → Beta(9, 16)
    let (a, b) = (9.0_f64, 16.0_f64);
    let bb_mean = a / (a + b);
    let bb_sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
    let bb = conjugate_check(&BetaBinomial { a: 2.0, b: 3.0, k: 7.0, n: 20.0 }, 0.5, bb_mean, bb_sd, 3)
        .map_err(|e| format!("beta-binomial: {e}"))?;
    let secs = t.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!("normal-normal {nn}; beta-binomial {bb}"))
}

// ---------------------------------------------------------------- 3

fn c3_bias_grid() -> Verdict {
    let cells = standard_cells(25, 20, 2024);
    let t = Instant::now();
    let grid = bias_grid(&cells, &Estimator::ALL, &FitSettings::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let mut by_cell: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &grid.rows {
        let key = format!("{} rho*={} T*={}", r.dgp.as_str(), r.rho_star, r.t_star);
        by_cell.entry(key).or_default().insert(r.estimator.as_str(), r.mab);
    }
    let mut problems = Vec::new();
    let (mut lr_ratio_min, mut pc_ratio_max) = (f64::INFINITY, 0.0_f64);
    for (cell, m) in &by_cell {
        let (lr, pc, bvp) = (
            m[Estimator::LinearRegression.as_str()],
            m[Estimator::PairedComparison.as_str()],
            m[Estimator::BivariatePoisson.as_str()],
        );
        lr_ratio_min = lr_ratio_min.min(lr / bvp);
        pc_ratio_max = pc_ratio_max.max(pc / bvp);
        if !(0.03..=0.12).contains(&bvp) {
            problems.push(format!("{cell}: BVP MAB {bvp:.3} outside [0.03, 0.12]"));
        }
        if !(0.30..=0.65).contains(&lr) {
            problems.push(format!("{cell}: LR MAB {lr:.3} outside [0.30, 0.65]"));
        }
        if lr <= 4.0 * bvp {
            problems.push(format!("{cell}: LR/BVP {:.2} not above 4", lr / bvp));
        }
        if pc > 1.6 * bvp {
            problems.push(format!("{cell}: PC/BVP {:.2} above 1.6", pc / bvp));
        }
    }
    check(elapsed <= Duration::from_secs(3600), format!("took {:.0}s", elapsed.as_secs_f64()))?;
    check(problems.is_empty(), problems.join("; "))?;
    Ok(format!(
        "{} cells; min LR/BVP {lr_ratio_min:.1}, max PC/BVP {pc_ratio_max:.2}",
        by_cell.len()
    ))
}

// ---------------------------------------------------------------- 4-7

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> Option<PathBuf> {
    let d = std::env::var_os("BPHAVEN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data"));
    let has_csv = fs::read_dir(&d)
        .ok()?
        .filter_map(|e| e.ok())
        .any(|e| e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")));
    has_csv.then_some(d)
}

const UNAVAILABLE: &str = "dataset unavailable (set BPHAVEN_DATA_DIR to the match CSV directory)";

fn real_cfg(out: &Path, args: &[&str]) -> RunConfig {
    let mut full = vec!["bphaven"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--paper-scale", "--seed", "2024", "--force"]);
    let cli = <Cli as clap::Parser>::try_parse_from(full).expect("valid arguments");
    let mut cfg = RunConfig::from_cli(&cli);
    cfg.data_dir = data_dir();
    cfg.out = out.to_path_buf();
    cfg
}

fn real_out() -> PathBuf {
    workspace_root().join("target/acceptance-real")
}

/// Stage-1 goals and yellow-card fits plus stage-2 yellow-card fits for all
/// leagues, written once into `target/acceptance-real`.
fn real_fits() -> Result<PathBuf, String> {
    let out = real_out();
    let done = out.join("yellows_free.league_table.csv");
    if done.exists() {
        return Ok(out);
    }
    for args in [
        ["fit", "--outcome", "goals", "--cov", "zero"],
        ["fit", "--outcome", "yellows", "--cov", "zero"],
        ["fit", "--outcome", "yellows", "--cov", "free"],
    ] {
        cmd_fit(&real_cfg(&out, &args)).map_err(|e| format!("{}: {e:#}", args.join(" ")))?;
    }
    Ok(out)
}

fn table_row(out: &Path, name: &str, league: &str) -> Result<bphaven_core::inference::LeagueFitReport, String> {
    bphaven_cli::read_league_table(&out.join(name))
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|r| r.league_id == league)
        .ok_or_else(|| format!("{league} missing from {name}"))
}

fn c4_goals() -> Verdict {
    data_dir().ok_or(UNAVAILABLE)?;
    let out = real_fits()?;
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    for (id, t, tp, p) in [("austrian_bundesliga", 0.161, -0.202, 0.999), ("german_bundesliga", 0.239, -0.024, 0.995)] {
        let r = table_row(&out, "goals_zero.league_table.csv", id)?;
        notes.push(format!("{id} T {:.3} T' {:.3} P {:.3}", r.t_hat, r.t_prime_hat, r.p_decline));
        if (r.t_hat - t).abs() > 0.04 || (r.t_prime_hat - tp).abs() > 0.04 || (r.p_decline - p).abs() > 0.02 {
            problems.push(format!("{id} off target ({t}, {tp}, {p})"));
        }
    }
    check(problems.is_empty(), format!("{}; {}", notes.join(", "), problems.join("; ")))?;
    Ok(notes.join(", "))
}

/// `s² = 9 · Var` of the stage-1 means, checked against a direct computation.
fn eb_construction() -> Result<String, String> {
    let mut rng = stream(5, &[]);
    let stage1: BTreeMap<String, (f64, f64)> = (0..17)
        .map(|i| (format!("l{i:02}"), (rng.random_range(-0.3..0.5), rng.random_range(-0.5..0.5))))
        .collect();
    let eb = empirical_bayes_priors(&stage1, Outcome::Yellows).map_err(|e| e.to_string())?;
    let var = |v: Vec<f64>| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    let vpre = var(stage1.values().map(|p| p.0).collect());
    let vpost = var(stage1.values().map(|p| p.1).collect());
    for prior in eb.priors.values() {
        let pre = prior.home_adv.variance;
        let post = prior.home_adv_post.variance;
        check(
            (pre - 9.0 * vpre).abs() <= 1e-12 * pre && (post - 9.0 * vpost).abs() <= 1e-12 * post,
            format!("prior variances {pre}, {post} vs 9·Var {}, {}", 9.0 * vpre, 9.0 * vpost),
        )?;
    }
    Ok("s² = 9·Var holds".into())
}

fn c5_yellows() -> Verdict {
    let eb = eb_construction()?;
    data_dir().ok_or(format!("{eb}; {UNAVAILABLE}"))?;
    let out = real_fits()?;
    let r = table_row(&out, "yellows_free.league_table.csv", "russian_premier_liga")?;
    let msg = format!("{eb}; russian_premier_liga P(T'>T) {:.3}", r.p_decline);
    check((r.p_decline - 0.997).abs() <= 0.03, format!("{msg}, target 0.997 ± 0.03"))?;
    Ok(msg)
}

fn c6_validation() -> Verdict {
    let dir = data_dir().ok_or(UNAVAILABLE)?;
    let out = real_out();
    fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let mut cfg = real_cfg(&out, &["validate"]);
    cfg.data_dir = Some(dir);
    let ds = load_dataset(&cfg).map_err(|e| format!("{e:#}"))?;
    let report = validate_counts(&ds.matches, &ds.registry);
    cmd_validate(&cfg).map_err(|e| format!("{e:#}"))?;
    let mismatches: Vec<String> = report
        .mismatches
        .iter()
        .map(|m| format!("{} {} {}≠{}", m.league, m.field, m.computed, m.expected))
        .collect();
    check(report.passed, mismatches.join("; "))?;
    Ok(format!("{} leagues match", report.leagues.len()))
}

fn c7_quadrants() -> Verdict {
    let dir = data_dir().ok_or(UNAVAILABLE)?;
    let out = real_fits()?;
    let mut cfg = real_cfg(&out, &["report"]);
    cfg.data_dir = Some(dir);
    let bundle = cmd_report(&cfg).map_err(|e| format!("{e:#}"))?;
    let q = bundle.quadrants.ok_or("no yellow-card fits")?;
    let got = (q.both_decline, q.goals_up_yellows_down, q.both_up, q.goals_down_yellows_up);
    let msg = format!("{}/{}/{}/{}", got.0, got.1, got.2, got.3);
    check(got == (11, 4, 2, 0), format!("{msg}, expected 11/4/2/0"))?;
    Ok(msg)
}

// ---------------------------------------------------------------- 8

const SYNTH_LEAGUES: [&str; 3] = ["alpha", "beta", "gamma"];

/// Three 6-team leagues over two seasons with a mid-season restart.
fn write_synthetic(dir: &Path) -> Result<(), String> {
    let mut leagues = Vec::new();
    let mut rows = vec!["league,season,date,home,away,hg,ag,hy,ay".to_string()];
    for (li, id) in SYNTH_LEAGUES.iter().enumerate() {
        let seasons = ["2018-2019", "2019-2020"];
        leagues.push(serde_json::json!({
            "league_id": id, "display_name": id, "country": "Nowhere", "tier": 1,
            "restart_date": "2020-06-01", "seasons": seasons,
        }));
        let mut rng = stream(99, &[li as u64]);
        for (si, s) in seasons.iter().enumerate() {
            let start = NaiveDate::from_ymd_opt(2018 + si as i32, 8, 1).unwrap();
            for (g, (h, a)) in schedule_double_round_robin(6).unwrap().into_iter().enumerate() {
                let date = start + chrono::Days::new(g as u64 * 10);
                let goals = bp_sample(&BPParams::new(1.5, 1.1, 0.0001).unwrap(), &mut rng);
                let cards = bp_sample(&BPParams::new(1.6, 1.9, 0.3).unwrap(), &mut rng);
                rows.push(format!("{id},{s},{date},t{h},t{a},{},{},{},{}", goals.0, goals.1, cards.0, cards.1));
            }
        }
    }
    fs::write(dir.join("matches.csv"), rows.join("\n") + "\n").map_err(|e| e.to_string())?;
    fs::write(
        dir.join("leagues.json"),
        serde_json::to_vec_pretty(&serde_json::json!({ "leagues": leagues })).unwrap(),
    )
    .map_err(|e| e.to_string())
}

fn run_cli(data: &Path, out: &Path, workers: &str, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bphaven"))
        .args(args)
        .args(["--data-dir", data.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--workers", workers, "--seed", "17", "--allow-mismatch"])
        .args(["--chains", "2", "--iters", "600", "--burnin", "200"])
        .env_remove("BPHAVEN_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        status.status.success(),
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)),
    )
}

fn run_all(data: &Path, out: &Path, workers: &str) -> Result<(), String> {
    for args in [
        &["validate"][..],
        &["fit", "--outcome", "goals"],
        &["fit", "--outcome", "yellows", "--cov", "zero"],
        &["fit", "--outcome", "yellows", "--cov", "free"],
        &["report"],
        &["simulate", "--dgp", "bvp", "--Tstar", "0.25", "--seasons", "2"],
    ] {
        run_cli(data, out, workers, args)?;
    }
    Ok(())
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn c8_determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    fs::create_dir_all(&data).map_err(|e| e.to_string())?;
    write_synthetic(&data)?;
    let (a, b, c) = (tmp.path().join("w1"), tmp.path().join("w2"), tmp.path().join("w1b"));
    run_all(&data, &a, "1")?;
    run_all(&data, &b, "2")?;
    run_all(&data, &c, "1")?;
    let (fa, fb, fc) = (dir_contents(&a), dir_contents(&b), dir_contents(&c));
    check(fa.keys().eq(fb.keys()) && fa.keys().eq(fc.keys()), "output file sets differ")?;
    let differing: Vec<&String> = fa.keys().filter(|k| fa[*k] != fb[*k] || fa[*k] != fc[*k]).collect();
    check(differing.is_empty(), format!("files differ: {differing:?}"))?;
    Ok(format!("{} files byte-identical across runs and worker counts", fa.len()))
}

// ---------------------------------------------------------------- 9

fn c9_properties() -> Verdict {
    let mut runner = TestRunner::new(PtConfig {
        cases: 128,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let mut passed = Vec::new();
    let mut run = |name: &str, r: Result<(), String>| -> Result<(), String> {
        r.map_err(|e| format!("{name}: {e}"))?;
        passed.push(name.to_string());
        Ok(())
    };

    run(
        "pmf normalization",
        runner
            .run(&(0.05f64..4.0, 0.05f64..4.0, 0.0f64..2.0), |(l1, l2, l3)| {
                let p = BPParams::new(l1, l2, l3).unwrap();
                let total: f64 = (0..80u32).flat_map(|a| (0..80u32).map(move |b| (a, b))).map(|(a, b)| bp_log_pmf(a, b, &p).exp()).sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    run(
        "pre/post partition is lossless",
        runner
            .run(&(proptest::collection::vec(0i64..800, 0..60), 0i64..800), |(offsets, cut)| {
                let base = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
                let ms: Vec<Match> = offsets
                    .iter()
                    .enumerate()
                    .map(|(i, &o)| Match {
                        league: "x".into(),
                        season: "s".into(),
                        date: base + chrono::Days::new(o as u64),
                        home: format!("h{i}"),
                        away: "a".into(),
                        home_goals: Some(1),
                        away_goals: Some(0),
                        home_yellows: None,
                        away_yellows: None,
                    })
                    .collect();
                let restart = base + chrono::Days::new(cut as u64);
                let (pre, post) = split_pre_post(&ms, restart);
                prop_assert_eq!(pre.len() + post.len(), ms.len());
                prop_assert!(pre.iter().all(|m| m.date < restart));
                prop_assert!(post.iter().all(|m| m.date >= restart));
                let mut joined: Vec<&Match> = pre.iter().chain(&post).collect();
                joined.sort_by_key(|m| m.home.clone());
                let mut orig: Vec<&Match> = ms.iter().collect();
                orig.sort_by_key(|m| m.home.clone());
                prop_assert_eq!(joined, orig);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    run(
        "MAB >= |MB|",
        runner
            .run(&(proptest::collection::vec(proptest::option::weighted(0.9, -3.0f64..3.0), 1..40), -1.0f64..1.0), |(est, truth)| {
                let cell = SimCell { dgp: Dgp::Bvp, rho_star: 0.0, t_star: 0.0, n_seasons: est.len(), n_teams: 4, seed: 0 };
                let row = aggregate(&cell, Estimator::LinearRegression, &est, truth);
                if row.n_ok > 0 {
                    prop_assert!(row.mab + 1e-12 >= row.mb.abs());
                }
                prop_assert_eq!(row.n_ok + row.n_failed, est.len());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    run(
        "schedule combinatorics",
        runner
            .run(&(1usize..15).prop_map(|k| 2 * k), |n| {
                let s = schedule_double_round_robin(n).unwrap();
                prop_assert_eq!(s.len(), n * (n - 1));
                let set: std::collections::BTreeSet<_> = s.iter().collect();
                prop_assert_eq!(set.len(), s.len());
                for t in 0..n {
                    prop_assert_eq!(s.iter().filter(|g| g.0 == t).count(), n - 1);
                    prop_assert_eq!(s.iter().filter(|g| g.1 == t).count(), n - 1);
                }
                prop_assert!(s.iter().all(|g| g.0 != g.1));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    run(
        "goal_scale_ha monotone",
        runner
            .run(&(-2.0f64..2.0, -1.0f64..1.0, 0.001f64..1.0), |(mu, t, d)| {
                prop_assert!(goal_scale_ha(mu, t + d) > goal_scale_ha(mu, t));
                prop_assert!(goal_scale_ha(mu, 0.0).abs() < 1e-15);
                prop_assert_eq!(goal_scale_ha(mu, t) > 0.0, t > 0.0);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    Ok(passed.join(", "))
}
