//! The bivariate Poisson distribution BP(λ1, λ2, λ3).
//!
//! `(Y1, Y2) = (X1 + X3, X2 + X3)` with `Xj ~ Pois(λj)` independent, so the
//! marginal means are `λ1 + λ3` and `λ2 + λ3` and the covariance is `λ3`.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_FACTORIAL_TABLE: usize = 256;

fn ln_factorial_table() -> &'static [f64; LN_FACTORIAL_TABLE + 1] {
    static TABLE: OnceLock<[f64; LN_FACTORIAL_TABLE + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACTORIAL_TABLE + 1];
        for k in 1..=LN_FACTORIAL_TABLE {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    })
}

/// `ln(k!)`, tabulated up to 256 with a log-gamma fallback beyond.
#[inline]
pub fn ln_factorial(k: u32) -> f64 {
    let k = k as usize;
    if k <= LN_FACTORIAL_TABLE {
        ln_factorial_table()[k]
    } else {
        statrs::function::gamma::ln_gamma(k as f64 + 1.0)
    }
}

/// Univariate Poisson log-pmf for a strictly positive rate.
#[inline]
pub fn poisson_ln_pmf(y: u32, rate: f64) -> f64 {
    y as f64 * rate.ln() - rate - ln_factorial(y)
}

/// Same as [`poisson_ln_pmf`] but takes the log rate, avoiding a `ln` call.
#[inline]
pub fn poisson_ln_pmf_log_rate(y: u32, log_rate: f64) -> f64 {
    y as f64 * log_rate - log_rate.exp() - ln_factorial(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BPParams {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

impl BPParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        p.validate()?;
        Ok(p)
    }

    /// Independent case, `λ3 = 0` exactly.
    pub fn independent(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, 0.0)
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lambda1.is_finite()
            && self.lambda2.is_finite()
            && self.lambda3.is_finite()
            && self.lambda1 > 0.0
            && self.lambda2 > 0.0
            && self.lambda3 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "bivariate Poisson rates must satisfy λ1 > 0, λ2 > 0, λ3 ≥ 0 (got {}, {}, {})",
                self.lambda1, self.lambda2, self.lambda3
            )))
        }
    }
}

/// Log of `P(Y1 = y1, Y2 = y2)` under BP(λ1, λ2, λ3).
///
/// The shared-component sum over `k = 0..=min(y1, y2)` is accumulated in log
/// space with a running log-sum-exp. `λ3 = 0` short-circuits to the product of
/// two Poisson pmfs.
pub fn bp_log_pmf(y1: u32, y2: u32, p: &BPParams) -> f64 {
    let (l1, l2, l3) = (p.lambda1, p.lambda2, p.lambda3);
    if l3 == 0.0 {
        return poisson_ln_pmf(y1, l1) + poisson_ln_pmf(y2, l2);
    }
    let base = -(l1 + l2 + l3) + y1 as f64 * l1.ln() - ln_factorial(y1) + y2 as f64 * l2.ln()
        - ln_factorial(y2);
    base + ln_shared_sum(y1, y2, (l3 / (l1 * l2)).ln())
}

/// `ln Σ_k C(y1,k) C(y2,k) k! r^k` for `ln r = log_ratio`.
pub(crate) fn ln_shared_sum(y1: u32, y2: u32, log_ratio: f64) -> f64 {
    let kmax = y1.min(y2);
    // term_0 = 0; term_k = term_{k-1} + ln((y1-k+1)(y2-k+1)/k) + ln r
    let mut term = 0.0_f64;
    let mut max = 0.0_f64;
    let mut scaled = 1.0_f64;
    for k in 1..=kmax {
        let kf = k as f64;
        term += ((y1 - k + 1) as f64).ln() + ((y2 - k + 1) as f64).ln() - kf.ln() + log_ratio;
        if term > max {
            scaled = scaled * (max - term).exp() + 1.0;
            max = term;
        } else {
            scaled += (term - max).exp();
        }
    }
    max + scaled.ln()
}

/// Draw one pair by trivariate reduction.
pub fn bp_sample<R: Rng + ?Sized>(p: &BPParams, rng: &mut R) -> (u32, u32) {
    let x1 = poisson_draw(p.lambda1, rng);
    let x2 = poisson_draw(p.lambda2, rng);
    let x3 = if p.lambda3 > 0.0 {
        poisson_draw(p.lambda3, rng)
    } else {
        0
    };
    (x1 + x3, x2 + x3)
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    // rate is validated positive and finite by the callers
    let d = Poisson::new(rate).expect("positive finite Poisson rate");
    let x: f64 = d.sample(rng);
    x as u32
}

/// `(E[Y1], E[Y2], Cov(Y1, Y2)) = (λ1 + λ3, λ2 + λ3, λ3)`.
pub fn bp_moments(p: &BPParams) -> (f64, f64, f64) {
    (p.lambda1 + p.lambda3, p.lambda2 + p.lambda3, p.lambda3)
}
