//! Split-chain R-hat, multi-chain ESS, and pooled summaries.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic {
            parameter: String::new(),
            reason: format!("need at least 2 chains, got {}", chains.len()),
        });
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic {
            parameter: String::new(),
            reason: "need equal-length chains of at least 4 draws".into(),
        });
    }
    Ok(n)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn zero_variance(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

/// Split-chain potential scale reduction factor. Each chain is cut into two
/// halves (the middle draw is dropped when the length is odd) and the usual
/// between/within variance ratio is computed over the halves.
pub fn r_hat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_shape(chains)?;
    if zero_variance(chains) {
        return Err(Error::Diagnostic {
            parameter: String::new(),
            reason: "all draws identical".into(),
        });
    }
    let half = n / 2;
    let splits: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = mean(&splits.iter().map(|s| sample_var(s)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Autocovariance at `lag` with the biased `1/n` normalization.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size using the combined autocorrelation
/// estimate and Geyer's initial positive (monotone) sequence truncation.
/// Capped at `N log10 N` for `N` total draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_shape(chains)?;
    if zero_variance(chains) {
        return Err(Error::Diagnostic {
            parameter: String::new(),
            reason: "all draws identical".into(),
        });
    }
    let m = chains.len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { sample_var(&means) } else { 0.0 };
    let var_plus = w * (nf - 1.0) / nf + b_over_n;

    let rho = |lag: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // pairs P_k = rho_{2k} + rho_{2k+1}, kept while positive, forced non-increasing
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let p = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if p <= 0.0 {
            break;
        }
        let p = p.min(prev);
        sum += p;
        prev = p;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m as f64 * nf).log10());
    let total = m as f64 * nf;
    Ok((total / tau).min(total * total.log10()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q97_5: f64,
}

/// Linear-interpolation quantile of sorted data (type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, SD (n−1) and quantiles of each parameter over all chains pooled.
pub fn summarize(draws: &PosteriorDraws) -> Vec<ParamSummary> {
    (0..draws.dim())
        .map(|p| {
            let mut v = draws.pooled(p);
            let mu = mean(&v);
            let sd = if v.len() > 1 { sample_var(&v).sqrt() } else { 0.0 };
            v.sort_by(f64::total_cmp);
            ParamSummary {
                name: draws.names()[p].clone(),
                mean: mu,
                sd,
                q2_5: quantile_sorted(&v, 0.025),
                q25: quantile_sorted(&v, 0.25),
                q50: quantile_sorted(&v, 0.5),
                q75: quantile_sorted(&v, 0.75),
                q97_5: quantile_sorted(&v, 0.975),
            }
        })
        .collect()
}
