//! Problem instances, per-scenario running statistics and procedure state.
//!
//! A problem has `k` alternatives and `m` plausible input distributions, so
//! `k * m` scenarios. Scenario `(i, j)` is alternative `i` simulated under
//! distribution `j`. The minimax-best alternative is the one with the smallest
//! worst-case (largest over `j`) mean.
//!
//! Storage is row-major and 0-based. [`ScenarioId`] is the 1-based label used
//! in logs, CSV rows and serialized configs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::testbeds::{InventoryTestbed, QueueTestbed, ScenarioSimulator};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("need at least {min} {what}, got {got}")]
    TooFew {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} has {got} entries, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mean of scenario {0} is not finite")]
    NonFiniteMean(ScenarioId),
    #[error("observation {0} is not finite")]
    NonFiniteObservation(f64),
    #[error("backend describes a {bk}x{bm} grid but the instance is {k}x{m}")]
    BackendShape {
        bk: usize,
        bm: usize,
        k: usize,
        m: usize,
    },
}

/// 1-based scenario label `(alternative, distribution)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioId {
    pub alternative: usize,
    pub distribution: usize,
}

impl ScenarioId {
    pub fn new(alternative: usize, distribution: usize) -> Self {
        Self {
            alternative,
            distribution,
        }
    }

    /// Label for 0-based storage coordinates.
    pub fn from_zero_based(row: usize, col: usize) -> Self {
        Self::new(row + 1, col + 1)
    }

    pub fn row(&self) -> usize {
        self.alternative - 1
    }

    pub fn col(&self) -> usize {
        self.distribution - 1
    }

    pub fn is_within(&self, k: usize, m: usize) -> bool {
        (1..=k).contains(&self.alternative) && (1..=m).contains(&self.distribution)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.alternative, self.distribution)
    }
}

/// Where observations of a scenario come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// `X_ij ~ N(mu_ij, sigma_ij^2)` using the instance's means and variances.
    #[default]
    Gaussian,
    /// One observation is one run of the (s,S) inventory simulator.
    Inventory(InventoryTestbed),
    /// One observation is one run of the multiserver abandonment queue.
    Queue(QueueTestbed),
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::Gaussian => "gaussian",
            Backend::Inventory(_) => "inventory",
            Backend::Queue(_) => "queue",
        }
    }

    /// Grid dimensions implied by a testbed backend.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Backend::Gaussian => None,
            Backend::Inventory(t) => Some((t.policies.len(), t.demand_means.len())),
            Backend::Queue(t) => Some((t.staffing.len(), t.services.len())),
        }
    }

    /// Simulator for scenario `(row, col)`; `None` for the Gaussian backend.
    pub fn simulator(&self, row: usize, col: usize) -> Option<ScenarioSimulator> {
        match self {
            Backend::Gaussian => None,
            Backend::Inventory(t) => Some(t.simulator(row, col)),
            Backend::Queue(t) => Some(t.simulator(row, col)),
        }
    }
}

/// A DRR&S problem: `k x m` scenario means and variances plus a sampling backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub k: usize,
    pub m: usize,
    /// Row-major `mu_ij`.
    pub means: Vec<f64>,
    /// Row-major `sigma_ij^2`.
    pub variances: Vec<f64>,
    #[serde(default)]
    pub backend: Backend,
    /// Set when rows are nonincreasing in `j` and alternative 1 is the unique
    /// minimax best with the worst-case column nondecreasing in `i`.
    #[serde(default)]
    pub canonical: bool,
}

impl ProblemInstance {
    pub fn new(
        k: usize,
        m: usize,
        means: Vec<f64>,
        variances: Vec<f64>,
        backend: Backend,
    ) -> Result<Self, ModelError> {
        let mut inst = Self {
            k,
            m,
            means,
            variances,
            backend,
            canonical: false,
        };
        inst.validate()?;
        inst.canonical = inst.satisfies_canonical_ordering();
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::TooFew {
                what: "alternatives",
                min: 2,
                got: self.k,
            });
        }
        if self.m < 1 {
            return Err(ModelError::TooFew {
                what: "scenarios per alternative",
                min: 1,
                got: self.m,
            });
        }
        let cells = self.k * self.m;
        if self.means.len() != cells {
            return Err(ModelError::Shape {
                what: "means",
                expected: cells,
                got: self.means.len(),
            });
        }
        if self.variances.len() != cells {
            return Err(ModelError::Shape {
                what: "variances",
                expected: cells,
                got: self.variances.len(),
            });
        }
        for (idx, (&mu, &var)) in self.means.iter().zip(&self.variances).enumerate() {
            if !mu.is_finite() {
                return Err(ModelError::NonFiniteMean(ScenarioId::from_zero_based(
                    idx / self.m,
                    idx % self.m,
                )));
            }
            if !(var > 0.0 && var.is_finite()) {
                return Err(ModelError::NonPositive {
                    what: "variance",
                    value: var,
                });
            }
        }
        if let Some((bk, bm)) = self.backend.dims() {
            if (bk, bm) != (self.k, self.m) {
                return Err(ModelError::BackendShape {
                    bk,
                    bm,
                    k: self.k,
                    m: self.m,
                });
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.k * self.m
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.m + col
    }

    pub fn mean(&self, row: usize, col: usize) -> f64 {
        self.means[self.index(row, col)]
    }

    pub fn variance(&self, row: usize, col: usize) -> f64 {
        self.variances[self.index(row, col)]
    }

    pub fn sd(&self, row: usize, col: usize) -> f64 {
        self.variance(row, col).sqrt()
    }

    pub fn row_means(&self, row: usize) -> &[f64] {
        &self.means[row * self.m..(row + 1) * self.m]
    }

    /// Column of the largest true mean in `row`, ties to the lowest index.
    pub fn worst_case_col(&self, row: usize) -> usize {
        argmax_lowest(self.row_means(row))
    }

    pub fn worst_case_means(&self) -> Vec<f64> {
        (0..self.k)
            .map(|i| self.mean(i, self.worst_case_col(i)))
            .collect()
    }

    /// 0-based minimax-best alternative, ties to the lowest index.
    pub fn true_best(&self) -> usize {
        argmin_lowest(&self.worst_case_means())
    }

    /// Gap between the two smallest worst-case means.
    pub fn delta(&self) -> f64 {
        let mut w = self.worst_case_means();
        w.sort_by(|a, b| a.total_cmp(b));
        w[1] - w[0]
    }

    /// Default boundary: midpoint between the best and runner-up worst-case means.
    pub fn default_boundary(&self) -> f64 {
        let mut w = self.worst_case_means();
        w.sort_by(|a, b| a.total_cmp(b));
        0.5 * (w[0] + w[1])
    }

    pub fn satisfies_canonical_ordering(&self) -> bool {
        let rows_sorted = (0..self.k).all(|i| self.row_means(i).windows(2).all(|w| w[0] >= w[1]));
        let col_sorted = (1..self.k).all(|i| self.mean(i, 0) >= self.mean(i - 1, 0));
        rows_sorted && col_sorted && self.mean(1, 0) > self.mean(0, 0)
    }
}

/// Slippage configuration: row 1 all zeros, every other row equal to `gap`.
pub fn sc_config(k: usize, m: usize, gap: f64, variance: f64) -> Result<ProblemInstance, ModelError> {
    check_positive("gap", gap)?;
    check_positive("variance", variance)?;
    let means = (0..k)
        .flat_map(|i| std::iter::repeat_n(if i == 0 { 0.0 } else { gap }, m))
        .collect();
    ProblemInstance::new(k, m, means, vec![variance; k * m], Backend::Gaussian)
}

/// Monotone means configuration: `mu_ij = 0.3 (i-1) - 0.1 (j-1)`.
pub fn mm_config(k: usize, m: usize, variance: f64) -> Result<ProblemInstance, ModelError> {
    check_positive("variance", variance)?;
    let means = (0..k)
        .flat_map(|i| (0..m).map(move |j| 0.3 * i as f64 - 0.1 * j as f64))
        .collect();
    ProblemInstance::new(k, m, means, vec![variance; k * m], Backend::Gaussian)
}

fn check_positive(what: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositive { what, value })
    }
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = idx;
        }
    }
    best
}

pub(crate) fn argmin_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = idx;
        }
    }
    best
}

/// How an observation was allocated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Init,
    MStep,
    KStep,
}

/// Streaming count, mean and sum of squared deviations for one scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScenarioStats {
    pub n: u64,
    pub n_init: u64,
    pub n_m: u64,
    pub n_k: u64,
    pub mean: f64,
    pub m2: f64,
}

impl ScenarioStats {
    /// Welford update. The same arithmetic backs [`crate::streams::prefix_means`].
    pub fn record(&mut self, x: f64, provenance: Provenance) -> Result<(), ModelError> {
        if !x.is_finite() {
            return Err(ModelError::NonFiniteObservation(x));
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        match provenance {
            Provenance::Init => self.n_init += 1,
            Provenance::MStep => self.n_m += 1,
            Provenance::KStep => self.n_k += 1,
        }
        Ok(())
    }

    /// Value-returning form of [`ScenarioStats::record`].
    pub fn updated(mut self, x: f64, provenance: Provenance) -> Result<Self, ModelError> {
        self.record(x, provenance)?;
        Ok(self)
    }

    /// Unbiased sample variance; `None` below two observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }
}

/// Full state of an AA/GAA run.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationState {
    pub k: usize,
    pub m: usize,
    /// Row-major.
    pub stats: Vec<ScenarioStats>,
    /// `r_i^m`: rounds in which alternative `i` was the current best.
    pub r_m: Vec<u64>,
    /// `r_i^k`: rounds in which alternative `i` took part in the k-step.
    pub r_k: Vec<u64>,
    pub rounds: u64,
    pub consumed: u64,
    pub budget: u64,
}

impl AllocationState {
    pub fn new(k: usize, m: usize, budget: u64) -> Self {
        Self {
            k,
            m,
            stats: vec![ScenarioStats::default(); k * m],
            r_m: vec![0; k],
            r_k: vec![0; k],
            rounds: 0,
            consumed: 0,
            budget,
        }
    }

    pub fn stats(&self, row: usize, col: usize) -> &ScenarioStats {
        &self.stats[row * self.m + col]
    }

    pub fn stats_mut(&mut self, row: usize, col: usize) -> &mut ScenarioStats {
        &mut self.stats[row * self.m + col]
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.stats[row * self.m..(row + 1) * self.m]
            .iter()
            .map(|s| s.n)
            .sum()
    }

    /// `sum r_i^m = t`, `sum r_i^k = t (k - 1)`, and the budget ledger.
    pub fn counters_consistent(&self) -> bool {
        let t = self.rounds;
        let sum_m: u64 = self.r_m.iter().sum();
        let sum_k: u64 = self.r_k.iter().sum();
        let total_n: u64 = self.stats.iter().map(|s| s.n).sum();
        sum_m == t
            && sum_k == t * (self.k as u64 - 1)
            && total_n == self.consumed
            && self.consumed <= self.budget
    }
}
