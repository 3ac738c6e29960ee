//! Parametric service-time families, maximum-likelihood fits and the
//! Kolmogorov-Smirnov retention step used to build finite ambiguity sets.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{digamma, gamma_lr};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("observations must be positive and finite, found {0}")]
    NonPositiveObservation(f64),
    #[error("significance level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("no candidate family passed the KS test")]
    EmptyAmbiguitySet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lognormal,
    Gamma,
    Weibull,
    Exponential,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Lognormal,
        Family::Gamma,
        Family::Weibull,
        Family::Exponential,
    ];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::Lognormal => "lognormal",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::Exponential => "exponential",
        };
        f.write_str(name)
    }
}

/// A fully parameterized positive distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParamDist {
    Exponential { mean: f64 },
    /// `ln X ~ N(mu, sigma^2)`.
    Lognormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    /// Point mass; used for stub regimes.
    Constant { value: f64 },
}

impl ParamDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamDist::Exponential { mean } => {
                if mean <= 0.0 {
                    0.0
                } else {
                    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
                }
            }
            ParamDist::Lognormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("valid lognormal").sample(rng)
            }
            ParamDist::Gamma { shape, scale } => {
                Gamma::new(shape, scale).expect("valid gamma").sample(rng)
            }
            ParamDist::Weibull { shape, scale } => {
                Weibull::new(scale, shape).expect("valid weibull").sample(rng)
            }
            ParamDist::Constant { value } => value,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match *self {
                ParamDist::Constant { value } if x >= value => 1.0,
                _ => 0.0,
            };
        }
        match *self {
            ParamDist::Exponential { mean } => 1.0 - (-x / mean).exp(),
            ParamDist::Lognormal { mu, sigma } => {
                0.5 * (1.0 + erf((x.ln() - mu) / (sigma * std::f64::consts::SQRT_2)))
            }
            ParamDist::Gamma { shape, scale } => gamma_lr(shape, x / scale),
            ParamDist::Weibull { shape, scale } => 1.0 - (-(x / scale).powf(shape)).exp(),
            ParamDist::Constant { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ParamDist::Exponential { mean } => mean,
            ParamDist::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            ParamDist::Gamma { shape, scale } => shape * scale,
            ParamDist::Weibull { shape, scale } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
            ParamDist::Constant { value } => value,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ParamDist::Exponential { .. } => "exponential",
            ParamDist::Lognormal { .. } => "lognormal",
            ParamDist::Gamma { .. } => "gamma",
            ParamDist::Weibull { .. } => "weibull",
            ParamDist::Constant { .. } => "constant",
        }
    }

    /// Compact `name(p1,p2)` label for CSV output.
    pub fn label(&self) -> String {
        match *self {
            ParamDist::Exponential { mean } => format!("exponential(mean={mean})"),
            ParamDist::Lognormal { mu, sigma } => format!("lognormal(mu={mu};sigma={sigma})"),
            ParamDist::Gamma { shape, scale } => format!("gamma(shape={shape};scale={scale})"),
            ParamDist::Weibull { shape, scale } => format!("weibull(shape={shape};scale={scale})"),
            ParamDist::Constant { value } => format!("constant({value})"),
        }
    }
}

/// Why a family was not fitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FitIssue {
    /// Zero spread in the data (or in its logarithm).
    Degenerate,
    NoConvergence,
}

impl fmt::Display for FitIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitIssue::Degenerate => f.write_str("degenerate"),
            FitIssue::NoConvergence => f.write_str("no-convergence"),
        }
    }
}

/// Maximum-likelihood fit of `family` to positive data.
pub fn fit_mle(family: Family, xs: &[f64]) -> Result<ParamDist, FitIssue> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let log_mean = logs.iter().sum::<f64>() / n;
    let log_var = logs.iter().map(|l| (l - log_mean).powi(2)).sum::<f64>() / n;
    match family {
        Family::Exponential => Ok(ParamDist::Exponential { mean }),
        Family::Lognormal => {
            if log_var <= 1e-14 {
                return Err(FitIssue::Degenerate);
            }
            Ok(ParamDist::Lognormal {
                mu: log_mean,
                sigma: log_var.sqrt(),
            })
        }
        Family::Gamma => {
            let s = mean.ln() - log_mean;
            if s <= 1e-12 {
                return Err(FitIssue::Degenerate);
            }
            let shape = gamma_shape_mle(s).ok_or(FitIssue::NoConvergence)?;
            Ok(ParamDist::Gamma {
                shape,
                scale: mean / shape,
            })
        }
        Family::Weibull => {
            if log_var <= 1e-14 {
                return Err(FitIssue::Degenerate);
            }
            let shape = weibull_shape_mle(&logs, log_mean).ok_or(FitIssue::NoConvergence)?;
            let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scaled = logs.iter().map(|l| (shape * (l - max_log)).exp()).sum::<f64>() / n;
            let scale = (scaled.ln() / shape + max_log).exp();
            Ok(ParamDist::Weibull { shape, scale })
        }
    }
}

/// Solves `ln k - digamma(k) = s` by safeguarded Newton.
fn gamma_shape_mle(s: f64) -> Option<f64> {
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let g = k.ln() - digamma(k) - s;
        let dg = 1.0 / k - trigamma(k);
        let step = g / dg;
        let mut next = k - step;
        if next <= 0.0 {
            next = k / 2.0;
        }
        if (next - k).abs() <= 1e-12 * k {
            return Some(next);
        }
        k = next;
    }
    None
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Root of the Weibull shape score equation, bracketed then bisected.
fn weibull_shape_mle(logs: &[f64], log_mean: f64) -> Option<f64> {
    let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let score = |k: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for &l in logs {
            let w = (k * (l - max_log)).exp();
            num += w * l;
            den += w;
        }
        num / den - 1.0 / k - log_mean
    };
    // score is increasing in k: -inf near 0, positive for large k
    let (mut lo, mut hi) = (1e-3, 1.0);
    while score(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// One-sample KS statistic `sup |F_n - F|` of `xs` against `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(alpha / 2) / 2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Fit report for one candidate family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyFit {
    pub family: Family,
    pub params: Option<ParamDist>,
    pub ks_statistic: Option<f64>,
    pub critical_value: f64,
    pub retained: bool,
    pub issue: Option<FitIssue>,
}

/// Members that passed the KS test, with the full fit report.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguitySet {
    pub members: Vec<ParamDist>,
    pub report: Vec<FamilyFit>,
}

/// Fits every family in `families`, keeping those whose KS statistic is
/// below the critical value at level `alpha`.
pub fn build_ambiguity_set(
    observations: &[f64],
    families: &[Family],
    alpha: f64,
) -> Result<AmbiguitySet, FitError> {
    if observations.len() < 2 {
        return Err(FitError::TooFewObservations(observations.len()));
    }
    if let Some(&bad) = observations.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(FitError::NonPositiveObservation(bad));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FitError::BadLevel(alpha));
    }
    let critical = ks_critical_value(observations.len(), alpha);
    let mut report = Vec::with_capacity(families.len());
    let mut members = Vec::new();
    for &family in families {
        match fit_mle(family, observations) {
            Ok(params) => {
                let d = ks_statistic(observations, |x| params.cdf(x));
                let retained = d < critical;
                if retained && !members.contains(&params) {
                    members.push(params.clone());
                }
                report.push(FamilyFit {
                    family,
                    params: Some(params),
                    ks_statistic: Some(d),
                    critical_value: critical,
                    retained,
                    issue: None,
                });
            }
            Err(issue) => report.push(FamilyFit {
                family,
                params: None,
                ks_statistic: None,
                critical_value: critical,
                retained: false,
                issue: Some(issue),
            }),
        }
    }
    if members.is_empty() {
        return Err(FitError::EmptyAmbiguitySet);
    }
    Ok(AmbiguitySet { members, report })
}
