//! Periodic-review (s,S) inventory system with full backlogging and random
//! lead times. One run returns the average cost per period.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InventoryPolicy {
    #[serde(rename = "s")]
    pub reorder_point: f64,
    #[serde(rename = "S")]
    pub order_up_to: f64,
}

impl InventoryPolicy {
    pub fn new(reorder_point: f64, order_up_to: f64) -> Self {
        Self {
            reorder_point,
            order_up_to,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InventoryParams {
    pub initial_inventory: f64,
    pub periods: u32,
    pub holding_cost: f64,
    pub fixed_order_cost: f64,
    pub unit_order_cost: f64,
    /// Mean of the Poisson lead time, in periods.
    pub lead_time_mean: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        Self {
            initial_inventory: 1000.0,
            periods: 1000,
            holding_cost: 0.5,
            fixed_order_cost: 36.0,
            unit_order_cost: 1.0,
            lead_time_mean: 6.0,
        }
    }
}

/// Average per-period cost of one run.
///
/// Each period: exponential demand is taken from stock (shortfalls are
/// backlogged as negative stock), orders whose lead time has elapsed arrive,
/// an order up to `S` is placed when the inventory position (net stock plus
/// outstanding orders) is below `s`, and holding cost is charged on positive
/// end-of-period stock. An order with zero lead time arrives in the same period.
pub fn simulate<R: Rng + ?Sized>(
    policy: &InventoryPolicy,
    demand_mean: f64,
    params: &InventoryParams,
    rng: &mut R,
) -> f64 {
    let demand = (demand_mean > 0.0).then(|| Exp::new(1.0 / demand_mean).expect("positive rate"));
    let lead = Poisson::new(params.lead_time_mean).ok();
    let mut net = params.initial_inventory;
    let mut on_order = 0.0;
    // (arrival period, quantity)
    let mut pipeline: Vec<(u64, f64)> = Vec::new();
    let mut cost = 0.0;
    for t in 0..params.periods as u64 {
        if let Some(d) = &demand {
            net -= d.sample(rng);
        }
        pipeline.retain(|&(due, qty)| {
            if due <= t {
                net += qty;
                on_order -= qty;
                false
            } else {
                true
            }
        });
        let position = net + on_order;
        if position < policy.reorder_point {
            let qty = policy.order_up_to - position;
            cost += params.fixed_order_cost + params.unit_order_cost * qty;
            let delay = lead.as_ref().map_or(0, |l| l.sample(rng) as u64);
            if delay == 0 {
                net += qty;
            } else {
                on_order += qty;
                pipeline.push((t + delay, qty));
            }
        }
        cost += params.holding_cost * net.max(0.0);
    }
    cost / params.periods as f64
}
