//! Additive distributionally robust ranking and selection.
//!
//! Each of `k` alternatives is simulated under each of `m` plausible input
//! distributions; the goal is the alternative whose worst-case mean is
//! smallest. The crate provides the AA procedure and its generalization GAA
//! with pluggable sampling rules, reproducible observation streams, the
//! boundary-crossing bounds that describe their behaviour, and two
//! discrete-event testbeds.

pub mod analysis;
pub mod model;
pub mod posterior;
pub mod procedures;
pub mod streams;
pub mod testbeds;

pub use model::{
    mm_config, sc_config, AllocationState, Backend, ModelError, ProblemInstance, Provenance,
    ScenarioId, ScenarioStats,
};
pub use procedures::{run_aa, run_gaa, GaaConfig, RunRecord, RuleSpec};
pub use streams::{StreamSet, StreamSpec};
