//! AA and GAA procedures and their sampling rules.

pub mod engine;
pub mod rules;

pub use engine::{
    identify_round_leaders, run_aa, run_aa_on, run_gaa, run_gaa_on, GaaConfig, ProcedureError,
    RunRecord, TieBreak,
};
pub use rules::{
    AllocationRule, Candidate, EpsilonWrap, EqualRule, KgRule, RuleError, RuleSpec, TttsRule,
};
