//! The AA and GAA round engines.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rules::{AllocationRule, Candidate, RuleError, RuleSpec};
use crate::model::{
    argmax_lowest, argmin_lowest, AllocationState, ModelError, ProblemInstance, Provenance,
    ScenarioId,
};
use crate::posterior::Direction;
use crate::streams::{StreamError, StreamSet, StreamSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ProcedureError {
    #[error("budget {budget} is below the {required} observations needed to initialize")]
    BudgetTooSmall { budget: u64, required: u64 },
    #[error("invalid procedure config: {0}")]
    Config(String),
    #[error("round {round}: {source}")]
    Rule { round: u64, source: RuleError },
    #[error("round {round}: {step} rule returned {got} observations, expected {expected}")]
    AllocationSum {
        round: u64,
        step: &'static str,
        got: u64,
        expected: u64,
    },
    #[error("round {round}: {step} rule allocated {count} observations to {scenario}; at most 1 allowed")]
    NotBinary {
        round: u64,
        step: &'static str,
        scenario: ScenarioId,
        count: u32,
    },
    #[error("stream dimensions {got:?} do not match the instance {expected:?}")]
    StreamShape {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Final tie-break after `argmax r_i^m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lower worst-case sample mean, then lowest index.
    #[default]
    WorstCaseMean,
    LowestIndex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaaConfig {
    pub n0: u32,
    pub delta_m: u32,
    pub delta_k: u32,
    pub m_rule: RuleSpec,
    pub k_rule: RuleSpec,
    /// Allocate the round over the concatenated `k + m - 1` candidates with
    /// one max-seeking rule (`m_rule`), negating the k-step means. The round
    /// budget is then `delta_m` and every allocation is 0 or 1.
    #[serde(default)]
    pub joint: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl GaaConfig {
    /// The configuration under which GAA reproduces AA exactly.
    pub fn aa_equivalent(k: usize, m: usize) -> Self {
        Self {
            n0: 1,
            delta_m: m as u32,
            delta_k: k as u32 - 1,
            m_rule: RuleSpec::Equal,
            k_rule: RuleSpec::Equal,
            joint: false,
            tie_break: TieBreak::LowestIndex,
        }
    }

    /// One posterior-guided observation per round over the joint set.
    pub fn ttts(beta: f64, epsilon: f64, n0: u32) -> Self {
        let rule = RuleSpec::Epsilon {
            epsilon,
            inner: Box::new(RuleSpec::Ttts { beta }),
        };
        Self {
            n0,
            delta_m: 1,
            delta_k: 1,
            m_rule: rule.clone(),
            k_rule: rule,
            joint: true,
            tie_break: TieBreak::WorstCaseMean,
        }
    }

    /// Separate knowledge-gradient rules for the m-step and the k-step.
    pub fn kg(epsilon: f64, n0: u32) -> Self {
        let rule = RuleSpec::Epsilon {
            epsilon,
            inner: Box::new(RuleSpec::Kg),
        };
        Self {
            n0,
            delta_m: 1,
            delta_k: 1,
            m_rule: rule.clone(),
            k_rule: rule,
            joint: false,
            tie_break: TieBreak::WorstCaseMean,
        }
    }

    /// Observations consumed by one round.
    pub fn round_cost(&self) -> u64 {
        if self.joint {
            self.delta_m as u64
        } else {
            self.delta_m as u64 + self.delta_k as u64
        }
    }

    /// Every problem found, not just the first.
    pub fn problems(&self, k: usize, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.n0 < 1 {
            out.push("n0 must be at least 1".to_string());
        }
        let uses_k_rule = !self.joint;
        let variance = self.m_rule.needs_variance() || (uses_k_rule && self.k_rule.needs_variance());
        if variance && self.n0 < 2 {
            out.push(format!(
                "n0 = {} but a variance-based rule needs n0 >= 2",
                self.n0
            ));
        }
        if self.delta_m < 1 {
            out.push("delta_m must be at least 1".to_string());
        }
        if self.delta_k < 1 {
            out.push("delta_k must be at least 1".to_string());
        }
        if self.joint && self.delta_m as usize > k + m - 1 {
            out.push(format!(
                "joint mode allocates at most one observation per candidate; delta_m = {} exceeds k + m - 1 = {}",
                self.delta_m,
                k + m - 1
            ));
        }
        if !self.joint && self.delta_k as usize > k - 1 && !matches!(self.k_rule, RuleSpec::Equal) {
            out.push(format!(
                "k-step allocations must be 0 or 1; delta_k = {} exceeds k - 1 = {}",
                self.delta_k,
                k - 1
            ));
        }
        for (name, rule) in [("m_rule", &self.m_rule), ("k_rule", &self.k_rule)] {
            if let Err(e) = rule.build() {
                out.push(format!("{name}: {e}"));
            }
        }
        let steps = if self.joint {
            vec![("m_rule", &self.m_rule, self.delta_m, k + m - 1)]
        } else {
            vec![("m_rule", &self.m_rule, self.delta_m, m), ("k_rule", &self.k_rule, self.delta_k, k - 1)]
        };
        for (name, rule, budget, candidates) in steps {
            if let Some(p) = rule.budget_problem(budget, candidates) {
                out.push(format!("{name}: {p}"));
            }
        }
        out
    }

    pub fn validate(&self, k: usize, m: usize) -> Result<(), ProcedureError> {
        let problems = self.problems(k, m);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ProcedureError::Config(problems.join("; ")))
        }
    }
}

/// One macro-replication's outcome. Selection and round leaders are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: usize,
    pub m: usize,
    pub selection: usize,
    /// Row-major final `n_ij`.
    pub sample_sizes: Vec<u64>,
    /// Row-major final sample means.
    pub means: Vec<f64>,
    /// `b(t)` for each round.
    pub per_round_best: Vec<u32>,
    pub r_m: Vec<u64>,
    pub r_k: Vec<u64>,
    pub rounds: u64,
    pub consumed: u64,
    pub budget: u64,
    pub correct: bool,
}

impl RunRecord {
    pub fn sample_size(&self, row: usize, col: usize) -> u64 {
        self.sample_sizes[row * self.m + col]
    }

    fn from_state(state: &AllocationState, selection: usize, per_round_best: Vec<u32>, truth: usize) -> Self {
        Self {
            k: state.k,
            m: state.m,
            selection: selection + 1,
            sample_sizes: state.stats.iter().map(|s| s.n).collect(),
            means: state.stats.iter().map(|s| s.mean).collect(),
            per_round_best,
            r_m: state.r_m.clone(),
            r_k: state.r_k.clone(),
            rounds: state.rounds,
            consumed: state.consumed,
            budget: state.budget,
            correct: selection == truth,
        }
    }
}

/// Round leaders: per-row argmax of sample means (the estimated worst case)
/// and the row whose estimated worst case is smallest. Ties to lowest index.
pub fn identify_round_leaders(state: &AllocationState) -> (Vec<usize>, usize) {
    let worst: Vec<usize> = (0..state.k)
        .map(|i| {
            let row: Vec<f64> = (0..state.m).map(|j| state.stats(i, j).mean).collect();
            argmax_lowest(&row)
        })
        .collect();
    let worst_means: Vec<f64> = worst
        .iter()
        .enumerate()
        .map(|(i, &j)| state.stats(i, j).mean)
        .collect();
    (worst, argmin_lowest(&worst_means))
}

fn draw(
    state: &mut AllocationState,
    streams: &mut StreamSet,
    row: usize,
    col: usize,
    provenance: Provenance,
) -> Result<(), ProcedureError> {
    let x = streams.draw(row, col)?;
    state.stats_mut(row, col).record(x, provenance)?;
    state.consumed += 1;
    Ok(())
}

fn check_streams(streams: &StreamSet, k: usize, m: usize) -> Result<(), ProcedureError> {
    if streams.dims() != (k, m) {
        return Err(ProcedureError::StreamShape {
            got: streams.dims(),
            expected: (k, m),
        });
    }
    Ok(())
}

/// AA on caller-supplied streams; `truth` is the 0-based true best used for
/// the `correct` flag. `on_round` sees the state after every round.
pub fn run_aa_on(
    k: usize,
    m: usize,
    budget: u64,
    streams: &mut StreamSet,
    truth: usize,
    mut on_round: impl FnMut(&AllocationState),
) -> Result<RunRecord, ProcedureError> {
    check_streams(streams, k, m)?;
    let cells = (k * m) as u64;
    if budget < cells {
        return Err(ProcedureError::BudgetTooSmall {
            budget,
            required: cells,
        });
    }
    let mut state = AllocationState::new(k, m, budget);
    for i in 0..k {
        for j in 0..m {
            draw(&mut state, streams, i, j, Provenance::Init)?;
        }
    }
    let round_cost = (k + m - 1) as u64;
    let mut per_round_best = Vec::new();
    while state.consumed + round_cost < budget {
        let (worst, best) = identify_round_leaders(&state);
        per_round_best.push(best as u32 + 1);
        for j in 0..m {
            draw(&mut state, streams, best, j, Provenance::MStep)?;
        }
        for (i, &j) in worst.iter().enumerate() {
            if i != best {
                draw(&mut state, streams, i, j, Provenance::KStep)?;
                state.r_k[i] += 1;
            }
        }
        state.r_m[best] += 1;
        state.rounds += 1;
        on_round(&state);
    }
    let totals: Vec<f64> = (0..k).map(|i| state.row_total(i) as f64).collect();
    let selection = argmax_lowest(&totals);
    Ok(RunRecord::from_state(&state, selection, per_round_best, truth))
}

/// AA on the replication's own streams.
pub fn run_aa(instance: &ProblemInstance, budget: u64, spec: &StreamSpec) -> Result<RunRecord, ProcedureError> {
    let mut streams = StreamSet::open(instance, &spec.with_horizon(budget.max(1)))?;
    run_aa_on(instance.k, instance.m, budget, &mut streams, instance.true_best(), |_| {})
}

fn select_gaa(state: &AllocationState, tie_break: TieBreak) -> usize {
    let top = *state.r_m.iter().max().expect("k >= 2");
    let tied: Vec<usize> = (0..state.k).filter(|&i| state.r_m[i] == top).collect();
    match tie_break {
        TieBreak::LowestIndex => tied[0],
        TieBreak::WorstCaseMean => {
            let (worst, _) = identify_round_leaders(state);
            let wc: Vec<f64> = tied.iter().map(|&i| state.stats(i, worst[i]).mean).collect();
            tied[argmin_lowest(&wc)]
        }
    }
}

fn checked_sum(round: u64, step: &'static str, alloc: &[u32], expected: u32) -> Result<(), ProcedureError> {
    let got: u64 = alloc.iter().map(|&a| a as u64).sum();
    if got != expected as u64 {
        return Err(ProcedureError::AllocationSum {
            round,
            step,
            got,
            expected: expected as u64,
        });
    }
    Ok(())
}

/// GAA on caller-supplied streams and rule randomness.
#[allow(clippy::too_many_arguments)]
pub fn run_gaa_on(
    k: usize,
    m: usize,
    budget: u64,
    config: &GaaConfig,
    streams: &mut StreamSet,
    rng: &mut dyn RngCore,
    truth: usize,
    mut on_round: impl FnMut(&AllocationState),
) -> Result<RunRecord, ProcedureError> {
    check_streams(streams, k, m)?;
    config.validate(k, m)?;
    let init = config.n0 as u64 * (k * m) as u64;
    if budget < init {
        return Err(ProcedureError::BudgetTooSmall {
            budget,
            required: init,
        });
    }
    let m_rule: Box<dyn AllocationRule> = config.m_rule.build().map_err(|e| ProcedureError::Config(e.to_string()))?;
    let k_rule: Box<dyn AllocationRule> = config.k_rule.build().map_err(|e| ProcedureError::Config(e.to_string()))?;

    let mut state = AllocationState::new(k, m, budget);
    for i in 0..k {
        for j in 0..m {
            for _ in 0..config.n0 {
                draw(&mut state, streams, i, j, Provenance::Init)?;
            }
        }
    }
    let round_cost = config.round_cost();
    let mut per_round_best = Vec::new();
    while state.consumed + round_cost < budget {
        let round = state.rounds + 1;
        let (worst, best) = identify_round_leaders(&state);
        per_round_best.push(best as u32 + 1);
        let others: Vec<usize> = (0..k).filter(|&i| i != best).collect();
        let m_cands: Vec<Candidate> = (0..m).map(|j| state.stats(best, j).into()).collect();
        let k_cands: Vec<Candidate> = others.iter().map(|&i| state.stats(i, worst[i]).into()).collect();
        let rule_err = |source| ProcedureError::Rule { round, source };

        let (m_alloc, k_alloc) = if config.joint {
            let joint: Vec<Candidate> = m_cands
                .iter()
                .copied()
                .chain(k_cands.iter().map(|c| c.negated()))
                .collect();
            let alloc = m_rule
                .allocate(&joint, config.delta_m, Direction::Max, rng)
                .map_err(rule_err)?;
            checked_sum(round, "joint", &alloc, config.delta_m)?;
            for (idx, &a) in alloc.iter().enumerate() {
                if a > 1 {
                    let scenario = if idx < m {
                        ScenarioId::from_zero_based(best, idx)
                    } else {
                        let i = others[idx - m];
                        ScenarioId::from_zero_based(i, worst[i])
                    };
                    return Err(ProcedureError::NotBinary {
                        round,
                        step: "joint",
                        scenario,
                        count: a,
                    });
                }
            }
            let k_part = alloc[m..].to_vec();
            let mut m_part = alloc;
            m_part.truncate(m);
            (m_part, k_part)
        } else {
            let m_alloc = m_rule
                .allocate(&m_cands, config.delta_m, Direction::Max, rng)
                .map_err(rule_err)?;
            checked_sum(round, "m-step", &m_alloc, config.delta_m)?;
            let k_alloc = k_rule
                .allocate(&k_cands, config.delta_k, Direction::Min, rng)
                .map_err(rule_err)?;
            checked_sum(round, "k-step", &k_alloc, config.delta_k)?;
            if let Some((idx, &a)) = k_alloc.iter().enumerate().find(|(_, &a)| a > 1) {
                let i = others[idx];
                return Err(ProcedureError::NotBinary {
                    round,
                    step: "k-step",
                    scenario: ScenarioId::from_zero_based(i, worst[i]),
                    count: a,
                });
            }
            (m_alloc, k_alloc)
        };

        for (j, &a) in m_alloc.iter().enumerate() {
            for _ in 0..a {
                draw(&mut state, streams, best, j, Provenance::MStep)?;
            }
        }
        for (&i, &a) in others.iter().zip(&k_alloc) {
            for _ in 0..a {
                draw(&mut state, streams, i, worst[i], Provenance::KStep)?;
            }
        }
        state.r_m[best] += 1;
        for &i in &others {
            state.r_k[i] += 1;
        }
        state.rounds += 1;
        on_round(&state);
    }
    let selection = select_gaa(&state, config.tie_break);
    Ok(RunRecord::from_state(&state, selection, per_round_best, truth))
}

/// GAA on the replication's own streams and rule substream.
pub fn run_gaa(
    instance: &ProblemInstance,
    budget: u64,
    config: &GaaConfig,
    spec: &StreamSpec,
) -> Result<RunRecord, ProcedureError> {
    let spec = spec.with_horizon(budget.max(1));
    let mut streams = StreamSet::open(instance, &spec)?;
    let mut rng = spec.rule_rng();
    run_gaa_on(
        instance.k,
        instance.m,
        budget,
        config,
        &mut streams,
        &mut rng,
        instance.true_best(),
        |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mm_config, sc_config, ScenarioStats};

    fn state_with_means(means: &[&[f64]]) -> AllocationState {
        let k = means.len();
        let m = means[0].len();
        let mut s = AllocationState::new(k, m, 100);
        for (i, row) in means.iter().enumerate() {
            for (j, &mu) in row.iter().enumerate() {
                *s.stats_mut(i, j) = ScenarioStats::default().updated(mu, Provenance::Init).unwrap();
            }
        }
        s
    }

    #[test]
    fn leaders_examples() {
        let s = state_with_means(&[&[1.0, 3.0], &[5.0, 2.0]]);
        assert_eq!(identify_round_leaders(&s), (vec![1, 0], 0));
        let s = state_with_means(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(identify_round_leaders(&s), (vec![0, 0], 0));
        let s = state_with_means(&[&[4.0, 1.0], &[2.0, 3.0]]);
        assert_eq!(identify_round_leaders(&s).1, 1);
    }

    #[test]
    fn aa_round_costs_k_plus_m_minus_one() {
        let inst = sc_config(2, 2, 0.5, 25.0).unwrap();
        let spec = StreamSpec::new(1, 0, 0);
        let mut streams = StreamSet::open(&inst, &spec.with_horizon(100)).unwrap();
        let mut consumed = vec![];
        run_aa_on(2, 2, 100, &mut streams, 0, |s| consumed.push(s.consumed)).unwrap();
        for (t, c) in consumed.iter().enumerate() {
            assert_eq!(*c, 4 + 3 * (t as u64 + 1));
        }
    }

    #[test]
    fn aa_with_zero_rounds_selects_first() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        let rec = run_aa(&inst, 6, &StreamSpec::new(3, 0, 0)).unwrap();
        assert_eq!(rec.rounds, 0);
        assert_eq!(rec.selection, 1);
        assert!(matches!(
            run_aa(&inst, 5, &StreamSpec::new(3, 0, 0)),
            Err(ProcedureError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn scripted_best_keeps_non_best_on_its_worst_case() {
        // row 1 always low; row 2 has a clear worst case in column 1
        let rows = vec![
            vec![vec![-10.0; 50], vec![-11.0; 50]],
            vec![vec![5.0; 50], vec![1.0; 50]],
        ];
        let mut streams = StreamSet::fixed(rows);
        let mut trace = vec![];
        let rec = run_aa_on(2, 2, 40, &mut streams, 0, |s| {
            trace.push((s.stats(1, 0).n, s.stats(1, 1).n))
        })
        .unwrap();
        assert!(rec.per_round_best.iter().all(|&b| b == 1));
        for (t, &(n0, n1)) in trace.iter().enumerate() {
            assert_eq!(n0, t as u64 + 2);
            assert_eq!(n1, 1);
        }
    }

    #[test]
    fn aa_selection_matches_argmax_r_m() {
        let inst = mm_config(4, 3, 25.0).unwrap();
        for rep in 0..30 {
            let rec = run_aa(&inst, 600, &StreamSpec::new(9, rep, 0)).unwrap();
            let r_sel = argmax_lowest(&rec.r_m.iter().map(|&x| x as f64).collect::<Vec<_>>());
            assert_eq!(rec.selection, r_sel + 1);
            assert_eq!(rec.r_m.iter().sum::<u64>(), rec.rounds);
            assert_eq!(rec.r_k.iter().sum::<u64>(), rec.rounds * 3);
            assert_eq!(rec.consumed, 12 + rec.rounds * 6);
            assert!(rec.consumed + 6 >= 600 && rec.consumed < 600);
        }
    }

    #[test]
    fn gaa_equal_reproduces_aa() {
        let inst = mm_config(4, 3, 25.0).unwrap();
        let config = GaaConfig::aa_equivalent(4, 3);
        for rep in 0..20 {
            let spec = StreamSpec::new(5, rep, 0);
            let aa = run_aa(&inst, 900, &spec).unwrap();
            let gaa = run_gaa(&inst, 900, &config, &spec).unwrap();
            assert_eq!(aa, gaa);
        }
    }

    #[test]
    fn gaa_zero_rounds_falls_to_tie_break() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        let config = GaaConfig::ttts(0.5, 0.1, 2);
        let rec = run_gaa(&inst, 12, &config, &StreamSpec::new(1, 1, 0)).unwrap();
        assert_eq!(rec.rounds, 0);
        assert!(rec.r_m.iter().all(|&r| r == 0));
        let wc: Vec<f64> = (0..3)
            .map(|i| rec.means[i * 2].max(rec.means[i * 2 + 1]))
            .collect();
        assert_eq!(rec.selection, argmin_lowest(&wc) + 1);
    }

    #[test]
    fn gaa_joint_consumes_one_per_round() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        let config = GaaConfig::ttts(0.5, 0.1, 2);
        let rec = run_gaa(&inst, 100, &config, &StreamSpec::new(1, 2, 0)).unwrap();
        assert_eq!(rec.consumed, 12 + rec.rounds);
        assert_eq!(rec.consumed, 99);
    }

    #[test]
    fn gaa_kg_runs_and_respects_budget() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        let config = GaaConfig::kg(0.1, 2);
        let rec = run_gaa(&inst, 100, &config, &StreamSpec::new(1, 2, 0)).unwrap();
        assert_eq!(rec.consumed, 12 + 2 * rec.rounds);
        assert!(rec.consumed < 100);
    }

    #[test]
    fn config_problems_are_listed_together() {
        let mut c = GaaConfig::kg(0.1, 1);
        c.delta_m = 0;
        let problems = c.problems(3, 2);
        // n0 too small for KG, delta_m below 1, and KG cannot spend a zero step
        assert_eq!(problems.len(), 3, "{problems:?}");
        let c = GaaConfig {
            delta_k: 3,
            ..GaaConfig::kg(0.1, 2)
        };
        assert!(c.validate(3, 2).is_err());
    }

    #[test]
    fn step_budgets_the_rules_cannot_split_are_rejected() {
        let c = GaaConfig {
            delta_m: 4,
            delta_k: 4,
            k_rule: RuleSpec::Epsilon {
                epsilon: 0.1,
                inner: Box::new(RuleSpec::Ttts { beta: 0.5 }),
            },
            n0: 2,
            ..GaaConfig::aa_equivalent(5, 3)
        };
        let problems = c.problems(5, 3);
        assert_eq!(problems.len(), 2, "{problems:?}");
        assert!(problems[0].starts_with("m_rule: equal"), "{problems:?}");
        assert!(problems[1].starts_with("k_rule: ttts"), "{problems:?}");
        let explore_only = GaaConfig {
            delta_k: 4,
            k_rule: RuleSpec::Epsilon {
                epsilon: 1.0,
                inner: Box::new(RuleSpec::Kg),
            },
            ..GaaConfig::aa_equivalent(5, 3)
        };
        assert!(explore_only.problems(5, 3).is_empty());
    }

    #[test]
    fn kg_with_large_delta_is_rejected_before_sampling() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        let config = GaaConfig {
            delta_m: 2,
            ..GaaConfig::kg(0.0, 2)
        };
        let err = run_gaa(&inst, 100, &config, &StreamSpec::new(1, 2, 0)).unwrap_err();
        assert!(matches!(err, ProcedureError::Config(_)), "{err}");
    }
}
