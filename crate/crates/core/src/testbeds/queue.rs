//! Multiserver FIFO queue with exponential patience (abandonment). One run
//! serves a fixed number of arrivals from an empty system and returns
//! `c_A * abandonments + c_W * mean wait of served customers + c_S * servers`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::fitting::ParamDist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueParams {
    pub interarrival_mean: f64,
    pub patience_mean: f64,
    pub arrivals: u32,
    pub abandon_cost: f64,
    pub wait_cost: f64,
    pub staffing_cost: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        Self {
            interarrival_mean: 0.1,
            patience_mean: 3.0,
            arrivals: 1000,
            abandon_cost: 0.1,
            wait_cost: 15.0,
            staffing_cost: 0.5,
        }
    }
}

/// Outcome counters of one queue run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QueueRun {
    pub abandoned: u32,
    pub served: u32,
    pub total_wait: f64,
}

impl QueueRun {
    pub fn mean_wait(&self) -> f64 {
        if self.served == 0 {
            0.0
        } else {
            self.total_wait / self.served as f64
        }
    }

    pub fn cost(&self, servers: u32, params: &QueueParams) -> f64 {
        params.abandon_cost * self.abandoned as f64
            + params.wait_cost * self.mean_wait()
            + params.staffing_cost * servers as f64
    }
}

/// Runs the queue. Every customer draws interarrival time, patience and
/// service time in that order, so runs with equal seeds share their input
/// sequences across staffing levels.
pub fn run<R: Rng + ?Sized>(
    servers: u32,
    service: &ParamDist,
    params: &QueueParams,
    rng: &mut R,
) -> QueueRun {
    let interarrival = Exp::new(1.0 / params.interarrival_mean).expect("positive rate");
    let patience = Exp::new(1.0 / params.patience_mean).expect("positive rate");
    let mut free_at = vec![0.0f64; servers.max(1) as usize];
    let mut out = QueueRun::default();
    let mut clock = 0.0;
    for _ in 0..params.arrivals {
        clock += interarrival.sample(rng);
        let limit = patience.sample(rng);
        let work = service.sample(rng);
        if servers == 0 {
            out.abandoned += 1;
            continue;
        }
        let (slot, &earliest) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one server");
        let wait = (earliest - clock).max(0.0);
        if wait > limit {
            out.abandoned += 1;
            continue;
        }
        free_at[slot] = clock + wait + work;
        out.served += 1;
        out.total_wait += wait;
    }
    out
}

pub fn simulate<R: Rng + ?Sized>(
    servers: u32,
    service: &ParamDist,
    params: &QueueParams,
    rng: &mut R,
) -> f64 {
    run(servers, service, params, rng).cost(servers, params)
}
