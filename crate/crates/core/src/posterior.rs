//! Normal-gamma beliefs about a scenario mean with unknown variance.
//!
//! Beliefs start from the improper noninformative limit and are only built
//! once a scenario has at least two observations. After `n` observations with
//! sample mean `x` and sum of squared deviations `m2` the posterior is
//! `loc = x`, `strength = n`, `shape = (n - 1) / 2`, `rate = m2 / 2`, so the
//! marginal of the mean is Student-t with `n - 1` degrees of freedom, centered
//! at `x`, with scale `s / sqrt(n)`.
//!
//! Posterior draws are `loc + scale * Z / sqrt(V / d)` with `Z` a standard
//! normal draw followed by `V` a chi-square(`d`) draw, both from the caller's
//! generator in that order.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::model::ScenarioStats;

#[derive(Debug, Error, PartialEq)]
pub enum PosteriorError {
    #[error("a belief needs at least 2 observations, got {0}")]
    TooFewObservations(u64),
}

/// Whether a rule looks for the largest or the smallest mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Max => a > b,
            Direction::Min => a < b,
        }
    }

    /// Index of the best value, ties to the lowest index. `None` when empty
    /// or every entry is excluded.
    pub fn best_index(self, xs: impl IntoIterator<Item = Option<f64>>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, x) in xs.into_iter().enumerate() {
            if let Some(x) = x {
                if best.is_none_or(|(_, b)| self.better(x, b)) {
                    best = Some((idx, x));
                }
            }
        }
        best.map(|(idx, _)| idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugateBelief {
    pub loc: f64,
    pub strength: f64,
    pub shape: f64,
    pub rate: f64,
}

impl ConjugateBelief {
    pub fn from_stats(stats: &ScenarioStats) -> Result<Self, PosteriorError> {
        Self::from_moments(stats.n, stats.mean, stats.m2)
    }

    pub fn from_moments(n: u64, mean: f64, m2: f64) -> Result<Self, PosteriorError> {
        if n < 2 {
            return Err(PosteriorError::TooFewObservations(n));
        }
        Ok(Self {
            loc: mean,
            strength: n as f64,
            shape: (n as f64 - 1.0) / 2.0,
            rate: m2.max(0.0) / 2.0,
        })
    }

    /// Zero spread: nothing left to learn.
    pub fn is_degenerate(&self) -> bool {
        self.rate <= 0.0
    }

    pub fn degrees_of_freedom(&self) -> f64 {
        2.0 * self.shape
    }

    /// Scale of the Student-t marginal of the mean, `s / sqrt(n)`.
    pub fn marginal_scale(&self) -> f64 {
        (self.rate / (self.shape * self.strength)).sqrt()
    }

    /// Scale of the change in `loc` produced by one more observation,
    /// `s / sqrt(n (n + 1))`.
    pub fn predictive_change_scale(&self) -> f64 {
        (self.rate / (self.shape * self.strength * (self.strength + 1.0))).sqrt()
    }

    /// One draw from the marginal posterior of the mean.
    pub fn draw_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            return self.loc;
        }
        let d = self.degrees_of_freedom();
        let z: f64 = StandardNormal.sample(rng);
        let v = ChiSquared::new(d).expect("positive degrees of freedom").sample(rng);
        self.loc + self.marginal_scale() * z / (v / d).sqrt()
    }
}

/// `f(z) = z Phi(z) + phi(z)`, the known-variance knowledge-gradient factor.
pub fn kg_factor_normal(z: f64) -> f64 {
    let n = Normal::standard();
    z * n.cdf(z) + n.pdf(z)
}

/// Student-t analog of [`kg_factor_normal`]:
/// `E[max(T + z, 0)] = z F_d(z) + (d + z^2) / (d - 1) t_d(z)`; infinite when `d <= 1`.
pub fn kg_factor_student(z: f64, d: f64) -> f64 {
    if d <= 1.0 {
        return f64::INFINITY;
    }
    let t = StudentsT::new(0.0, 1.0, d).expect("positive degrees of freedom");
    z * t.cdf(z) + (d + z * z) / (d - 1.0) * t.pdf(z)
}

/// Knowledge-gradient value of one more observation of a scenario whose
/// belief is `belief`, when the best competing mean is `best_other`.
///
/// The value depends only on the distance `|loc - best_other|`, so it is the
/// same for max- and min-seeking rules once `best_other` is chosen accordingly.
pub fn kg_score(belief: &ConjugateBelief, best_other: f64) -> f64 {
    if belief.is_degenerate() {
        return 0.0;
    }
    let scale = belief.predictive_change_scale();
    let zeta = -(belief.loc - best_other).abs() / scale;
    scale * kg_factor_student(zeta, belief.degrees_of_freedom())
}
