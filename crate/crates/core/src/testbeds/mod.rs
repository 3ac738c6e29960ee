//! Stochastic simulation testbeds that feed scenario streams.
//!
//! Each testbed maps a grid cell `(row, col)` to a [`ScenarioSimulator`]: the
//! row picks the decision (policy, staffing level) and the column picks the
//! plausible input distribution.

pub mod fitting;
pub mod inventory;
pub mod queue;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Backend, ModelError, ProblemInstance, Provenance, ScenarioId, ScenarioStats};
use crate::streams::{open_stream, StreamError, StreamSpec};

pub use fitting::{
    build_ambiguity_set, fit_mle, ks_critical_value, ks_statistic, AmbiguitySet, Family,
    FamilyFit, FitError, FitIssue, ParamDist,
};
pub use inventory::{InventoryParams, InventoryPolicy};
pub use queue::QueueParams;

/// (s,S) inventory grid: rows are policies, columns are demand means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InventoryTestbed {
    pub policies: Vec<InventoryPolicy>,
    pub demand_means: Vec<f64>,
    #[serde(default)]
    pub params: InventoryParams,
}

impl InventoryTestbed {
    /// All `(s, S)` pairs with `s` in 240..=340 and `S` in 350..=450, step 20.
    pub fn full_policy_grid() -> Vec<InventoryPolicy> {
        let mut out = Vec::new();
        for s in (240..=340).step_by(20) {
            for big_s in (350..=450).step_by(20) {
                out.push(InventoryPolicy::new(s as f64, big_s as f64));
            }
        }
        out
    }

    /// The 18 policies with reorder points 240, 280 and 320.
    pub fn reduced_policy_grid() -> Vec<InventoryPolicy> {
        Self::full_policy_grid()
            .into_iter()
            .filter(|p| (p.reorder_point as i64 - 240) % 40 == 0)
            .collect()
    }

    pub fn standard() -> Self {
        Self {
            policies: Self::full_policy_grid(),
            demand_means: vec![310.0, 320.0, 330.0, 340.0],
            params: InventoryParams::default(),
        }
    }

    pub fn simulator(&self, row: usize, col: usize) -> ScenarioSimulator {
        ScenarioSimulator::Inventory {
            policy: self.policies[row],
            demand_mean: self.demand_means[col],
            params: self.params.clone(),
        }
    }
}

/// Multiserver abandonment queue: rows are staffing levels, columns are
/// service-time distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueTestbed {
    pub staffing: Vec<u32>,
    pub services: Vec<ParamDist>,
    #[serde(default)]
    pub params: QueueParams,
}

impl QueueTestbed {
    pub fn simulator(&self, row: usize, col: usize) -> ScenarioSimulator {
        ScenarioSimulator::Queue {
            servers: self.staffing[row],
            service: self.services[col].clone(),
            params: self.params.clone(),
        }
    }
}

/// One scenario of a testbed; [`ScenarioSimulator::simulate`] returns the
/// output of one independent simulation run.
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSimulator {
    Inventory {
        policy: InventoryPolicy,
        demand_mean: f64,
        params: InventoryParams,
    },
    Queue {
        servers: u32,
        service: ParamDist,
        params: QueueParams,
    },
}

impl ScenarioSimulator {
    pub fn simulate(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScenarioSimulator::Inventory {
                policy,
                demand_mean,
                params,
            } => inventory::simulate(policy, *demand_mean, params, rng),
            ScenarioSimulator::Queue {
                servers,
                service,
                params,
            } => queue::simulate(*servers, service, params, rng),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GroundTruthError {
    #[error("backend is not a simulation testbed")]
    NotATestbed,
    #[error("need at least 2 replications per scenario, got {0}")]
    TooFewReplications(u64),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Estimates every scenario's mean and variance from `reps` independent
/// simulation runs and returns an instance carrying them with `backend`.
pub fn ground_truth_instance(
    backend: Backend,
    reps: u64,
    seed: u64,
) -> Result<ProblemInstance, GroundTruthError> {
    let (k, m) = backend.dims().ok_or(GroundTruthError::NotATestbed)?;
    if reps < 2 {
        return Err(GroundTruthError::TooFewReplications(reps));
    }
    // placeholder moments; only the backend is used to open streams
    let probe = ProblemInstance {
        k,
        m,
        means: vec![0.0; k * m],
        variances: vec![1.0; k * m],
        backend: backend.clone(),
        canonical: false,
    };
    let spec = StreamSpec::new(seed, u64::MAX, reps);
    let stats = (0..k * m)
        .into_par_iter()
        .map(|idx| {
            let id = ScenarioId::from_zero_based(idx / m, idx % m);
            let mut stream = open_stream(&probe, id, &spec)?;
            let mut stats = ScenarioStats::default();
            for _ in 0..reps {
                stats.record(stream.next()?, Provenance::Init)?;
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>, GroundTruthError>>()?;
    let means = stats.iter().map(|s| s.mean).collect();
    // floor keeps a deterministic (zero-variance) scenario a valid instance
    let variances = stats
        .iter()
        .map(|s| s.sample_variance().unwrap_or(0.0).max(1e-12))
        .collect();
    Ok(ProblemInstance::new(k, m, means, variances, backend)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_grids() {
        let full = InventoryTestbed::full_policy_grid();
        assert_eq!(full.len(), 36);
        assert!(full.iter().all(|p| p.reorder_point < p.order_up_to));
        let reduced = InventoryTestbed::reduced_policy_grid();
        assert_eq!(reduced.len(), 18);
    }

    #[test]
    fn ground_truth_for_stub_regimes() {
        let mut bed = InventoryTestbed::standard();
        bed.policies.truncate(2);
        bed.demand_means = vec![0.0, 0.0];
        let inst = ground_truth_instance(Backend::Inventory(bed), 3, 1).unwrap();
        assert!(inst.means.iter().all(|&x| x == 500.0));

        let bed = QueueTestbed {
            staffing: vec![9, 10],
            services: vec![ParamDist::Constant { value: 0.0 }],
            params: QueueParams::default(),
        };
        let inst = ground_truth_instance(Backend::Queue(bed), 3, 1).unwrap();
        assert_eq!(inst.means, vec![4.5, 5.0]);
    }

    #[test]
    fn ground_truth_rejects_gaussian() {
        assert!(matches!(
            ground_truth_instance(Backend::Gaussian, 10, 1),
            Err(GroundTruthError::NotATestbed)
        ));
    }
}
