//! Sampling rules: given a candidate set of scenarios and a step budget,
//! decide how many observations each candidate receives.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ScenarioStats;
use crate::posterior::{kg_score, ConjugateBelief, Direction, PosteriorError};

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("no candidates to allocate over")]
    NoCandidates,
    #[error("{rule} cannot split a budget of {budget} over {candidates} candidates")]
    Budget {
        rule: String,
        budget: u32,
        candidates: usize,
    },
    #[error("{rule} needs every candidate to have at least 2 observations, candidate {index} has {n}")]
    TooFewObservations { rule: String, index: usize, n: u64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// What a rule sees of one candidate scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Candidate {
    pub fn negated(self) -> Self {
        Self {
            mean: -self.mean,
            ..self
        }
    }

    fn belief(&self) -> Result<ConjugateBelief, PosteriorError> {
        ConjugateBelief::from_moments(self.n, self.mean, self.m2)
    }
}

impl From<&ScenarioStats> for Candidate {
    fn from(s: &ScenarioStats) -> Self {
        Self {
            n: s.n,
            mean: s.mean,
            m2: s.m2,
        }
    }
}

/// The sampling-rule contract. Allocations are nonnegative and sum to `budget`.
pub trait AllocationRule: fmt::Debug + Send + Sync {
    fn tag(&self) -> String;

    /// True when the rule reads sample variances (requires `n >= 2`).
    fn needs_variance(&self) -> bool {
        false
    }

    fn allocate(
        &self,
        candidates: &[Candidate],
        budget: u32,
        direction: Direction,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<u32>, RuleError>;
}

/// Serializable rule description, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleSpec {
    Equal,
    Kg,
    Ttts {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Epsilon {
        epsilon: f64,
        inner: Box<RuleSpec>,
    },
}

fn default_beta() -> f64 {
    0.5
}

impl RuleSpec {
    pub fn build(&self) -> Result<Box<dyn AllocationRule>, RuleError> {
        Ok(match self {
            RuleSpec::Equal => Box::new(EqualRule),
            RuleSpec::Kg => Box::new(KgRule),
            RuleSpec::Ttts { beta } => Box::new(TttsRule::new(*beta)?),
            RuleSpec::Epsilon { epsilon, inner } => {
                Box::new(EpsilonWrap::new(inner.build()?, *epsilon)?)
            }
        })
    }

    pub fn tag(&self) -> String {
        match self {
            RuleSpec::Equal => "equal".into(),
            RuleSpec::Kg => "kg".into(),
            RuleSpec::Ttts { beta } => format!("ttts(beta={beta})"),
            RuleSpec::Epsilon { epsilon, inner } => format!("eps{epsilon}-{}", inner.tag()),
        }
    }

    pub fn needs_variance(&self) -> bool {
        match self {
            RuleSpec::Equal => false,
            RuleSpec::Kg | RuleSpec::Ttts { .. } => true,
            // an always-exploring wrapper never consults the inner rule
            RuleSpec::Epsilon { epsilon, inner } => *epsilon < 1.0 && inner.needs_variance(),
        }
    }

    /// Why a step of `budget` observations over `candidates` scenarios can
    /// never be allocated by this rule, or `None` if it can.
    pub fn budget_problem(&self, budget: u32, candidates: usize) -> Option<String> {
        match self {
            RuleSpec::Equal => {
                let fits = (budget as usize).is_multiple_of(candidates.max(1)) || (budget as usize) < candidates;
                (!fits).then(|| {
                    format!("equal needs a step budget below or a multiple of its {candidates} candidates, got {budget}")
                })
            }
            RuleSpec::Kg | RuleSpec::Ttts { .. } => {
                (budget != 1).then(|| format!("{} draws one observation per step; the step budget must be 1, got {budget}", self.tag()))
            }
            RuleSpec::Epsilon { epsilon, inner } if *epsilon < 1.0 => inner.budget_problem(budget, candidates),
            RuleSpec::Epsilon { .. } => None,
        }
    }
}

/// `c` each when the budget is `c` times the candidate count; otherwise one
/// each to the first `budget` candidates in index order.
#[derive(Clone, Copy, Debug, Default)]
pub struct EqualRule;

impl AllocationRule for EqualRule {
    fn tag(&self) -> String {
        "equal".into()
    }

    fn allocate(
        &self,
        candidates: &[Candidate],
        budget: u32,
        _direction: Direction,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<u32>, RuleError> {
        let c = candidates.len();
        if c == 0 {
            return Err(RuleError::NoCandidates);
        }
        if (budget as usize).is_multiple_of(c) {
            return Ok(vec![budget / c as u32; c]);
        }
        if (budget as usize) < c {
            return Ok((0..c).map(|i| u32::from(i < budget as usize)).collect());
        }
        Err(RuleError::Budget {
            rule: self.tag(),
            budget,
            candidates: c,
        })
    }
}

fn single_unit(rule: &dyn AllocationRule, candidates: &[Candidate], budget: u32) -> Result<(), RuleError> {
    if candidates.is_empty() {
        return Err(RuleError::NoCandidates);
    }
    if budget != 1 {
        return Err(RuleError::Budget {
            rule: rule.tag(),
            budget,
            candidates: candidates.len(),
        });
    }
    Ok(())
}

fn beliefs(rule: &dyn AllocationRule, candidates: &[Candidate]) -> Result<Vec<ConjugateBelief>, RuleError> {
    candidates
        .iter()
        .enumerate()
        .map(|(index, c)| {
            c.belief().map_err(|_| RuleError::TooFewObservations {
                rule: rule.tag(),
                index,
                n: c.n,
            })
        })
        .collect()
}

fn one_hot(len: usize, at: usize) -> Vec<u32> {
    let mut out = vec![0; len];
    out[at] = 1;
    out
}

/// Knowledge gradient under unknown variance; one observation per call.
#[derive(Clone, Copy, Debug, Default)]
pub struct KgRule;

impl KgRule {
    /// Per-candidate scores; a lone candidate scores `+inf`.
    pub fn scores(candidates: &[Candidate], direction: Direction) -> Result<Vec<f64>, RuleError> {
        let bs = beliefs(&KgRule, candidates)?;
        Ok((0..bs.len())
            .map(|i| {
                let others = bs
                    .iter()
                    .enumerate()
                    .map(|(j, b)| (j != i).then_some(b.loc));
                match direction.best_index(others) {
                    Some(j) => kg_score(&bs[i], bs[j].loc),
                    None => f64::INFINITY,
                }
            })
            .collect())
    }
}

impl AllocationRule for KgRule {
    fn tag(&self) -> String {
        "kg".into()
    }

    fn needs_variance(&self) -> bool {
        true
    }

    fn allocate(
        &self,
        candidates: &[Candidate],
        budget: u32,
        direction: Direction,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<u32>, RuleError> {
        single_unit(self, candidates, budget)?;
        let scores = Self::scores(candidates, direction)?;
        let pick = Direction::Max
            .best_index(scores.iter().map(|&s| Some(s)))
            .expect("nonempty");
        Ok(one_hot(candidates.len(), pick))
    }
}

/// Top-two Thompson sampling; one observation per call.
///
/// Draws one posterior mean per candidate and takes the best as leader. With
/// probability `beta` the leader is sampled; otherwise the remaining
/// candidates are redrawn with the leader deactivated and the best of those
/// (the challenger) is sampled.
#[derive(Clone, Copy, Debug)]
pub struct TttsRule {
    beta: f64,
}

impl TttsRule {
    pub fn new(beta: f64) -> Result<Self, RuleError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(RuleError::Parameter {
                name: "beta",
                value: beta,
            });
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl AllocationRule for TttsRule {
    fn tag(&self) -> String {
        format!("ttts(beta={})", self.beta)
    }

    fn needs_variance(&self) -> bool {
        true
    }

    fn allocate(
        &self,
        candidates: &[Candidate],
        budget: u32,
        direction: Direction,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<u32>, RuleError> {
        single_unit(self, candidates, budget)?;
        let bs = beliefs(self, candidates)?;
        let draws: Vec<f64> = bs.iter().map(|b| b.draw_mean(rng)).collect();
        let leader = direction
            .best_index(draws.iter().map(|&d| Some(d)))
            .expect("nonempty");
        let coin: f64 = rng.random();
        if coin < self.beta || bs.len() == 1 {
            return Ok(one_hot(bs.len(), leader));
        }
        let redraws: Vec<Option<f64>> = bs
            .iter()
            .enumerate()
            .map(|(i, b)| (i != leader).then(|| b.draw_mean(rng)))
            .collect();
        let challenger = direction.best_index(redraws).expect("at least two candidates");
        Ok(one_hot(bs.len(), challenger))
    }
}

/// With probability `epsilon` spreads the budget uniformly at random,
/// otherwise delegates to the inner rule.
///
/// A uniform step gives every candidate `budget / c` and the remainder to a
/// random subset of distinct candidates, so budgets up to `c` stay 0/1.
#[derive(Debug)]
pub struct EpsilonWrap {
    inner: Box<dyn AllocationRule>,
    epsilon: f64,
}

impl EpsilonWrap {
    pub fn new(inner: Box<dyn AllocationRule>, epsilon: f64) -> Result<Self, RuleError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(RuleError::Parameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        Ok(Self { inner, epsilon })
    }

    fn uniform(candidates: usize, budget: u32, rng: &mut dyn RngCore) -> Vec<u32> {
        let base = budget / candidates as u32;
        let extra = budget as usize % candidates;
        let mut out = vec![base; candidates];
        for idx in rand::seq::index::sample(rng, candidates, extra) {
            out[idx] += 1;
        }
        out
    }
}

impl AllocationRule for EpsilonWrap {
    fn tag(&self) -> String {
        format!("eps{}-{}", self.epsilon, self.inner.tag())
    }

    fn needs_variance(&self) -> bool {
        self.epsilon < 1.0 && self.inner.needs_variance()
    }

    fn allocate(
        &self,
        candidates: &[Candidate],
        budget: u32,
        direction: Direction,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<u32>, RuleError> {
        if candidates.is_empty() {
            return Err(RuleError::NoCandidates);
        }
        // boundary values skip the coin so randomness is shared with the inner rule
        let explore = if self.epsilon == 0.0 {
            false
        } else if self.epsilon == 1.0 {
            true
        } else {
            rng.random::<f64>() < self.epsilon
        };
        if explore {
            Ok(Self::uniform(candidates.len(), budget, rng))
        } else {
            self.inner.allocate(candidates, budget, direction, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(n: u64, mean: f64, var: f64) -> Candidate {
        Candidate {
            n,
            mean,
            m2: var * (n - 1) as f64,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[derive(Debug)]
    struct AlwaysFirst;

    impl AllocationRule for AlwaysFirst {
        fn tag(&self) -> String {
            "first".into()
        }
        fn allocate(
            &self,
            candidates: &[Candidate],
            _budget: u32,
            _direction: Direction,
            _rng: &mut dyn RngCore,
        ) -> Result<Vec<u32>, RuleError> {
            Ok(one_hot(candidates.len(), 0))
        }
    }

    #[test]
    fn equal_rule_examples() {
        let c = [cand(2, 0.0, 1.0); 3];
        let mut r = rng();
        assert_eq!(EqualRule.allocate(&c, 3, Direction::Max, &mut r).unwrap(), vec![1, 1, 1]);
        assert_eq!(EqualRule.allocate(&c[..2], 4, Direction::Max, &mut r).unwrap(), vec![2, 2]);
        assert_eq!(EqualRule.allocate(&c, 2, Direction::Max, &mut r).unwrap(), vec![1, 1, 0]);
        assert!(matches!(
            EqualRule.allocate(&c, 4, Direction::Max, &mut r),
            Err(RuleError::Budget { .. })
        ));
    }

    #[test]
    fn kg_symmetric_tie_picks_first() {
        let c = [cand(10, 1.0, 2.0), cand(10, 1.0, 2.0)];
        let a = KgRule.allocate(&c, 1, Direction::Max, &mut rng()).unwrap();
        assert_eq!(a, vec![1, 0]);
    }

    #[test]
    fn kg_prefers_less_sampled() {
        let c = [cand(100, 0.0, 1.0), cand(2, 0.0, 1.0)];
        let a = KgRule.allocate(&c, 1, Direction::Max, &mut rng()).unwrap();
        assert_eq!(a, vec![0, 1]);
    }

    #[test]
    fn kg_direction_chooses_the_right_competitor() {
        // under Max the contest is at the top; under Min at the bottom
        let c = [cand(30, 0.0, 1.0), cand(30, 5.0, 1.0), cand(30, 5.1, 1.0)];
        let max = KgRule::scores(&c, Direction::Max).unwrap();
        let min = KgRule::scores(&c, Direction::Min).unwrap();
        assert!(max[1] > max[0] && max[2] > max[0]);
        assert!(min[0] > 0.0);
        assert!(min[1] > min[2]);
    }

    #[test]
    fn kg_rejects_bad_inputs() {
        let c = [cand(10, 0.0, 1.0), Candidate { n: 1, mean: 0.0, m2: 0.0 }];
        assert!(matches!(
            KgRule.allocate(&c, 1, Direction::Max, &mut rng()),
            Err(RuleError::TooFewObservations { index: 1, .. })
        ));
        assert!(matches!(
            KgRule.allocate(&c[..1], 2, Direction::Max, &mut rng()),
            Err(RuleError::Budget { .. })
        ));
    }

    #[test]
    fn ttts_beta_one_always_takes_leader() {
        let rule = TttsRule::new(1.0).unwrap();
        let c = [cand(50, 0.0, 1.0), cand(50, 10.0, 1.0), cand(50, -3.0, 1.0)];
        let mut r = rng();
        for _ in 0..200 {
            assert_eq!(rule.allocate(&c, 1, Direction::Max, &mut r).unwrap(), vec![0, 1, 0]);
            assert_eq!(rule.allocate(&c, 1, Direction::Min, &mut r).unwrap(), vec![0, 0, 1]);
        }
    }

    #[test]
    fn ttts_beta_zero_with_two_candidates_takes_non_leader() {
        let rule = TttsRule::new(0.0).unwrap();
        let c = [cand(50, 0.0, 1.0), cand(50, 10.0, 1.0)];
        let mut r = rng();
        for _ in 0..200 {
            assert_eq!(rule.allocate(&c, 1, Direction::Max, &mut r).unwrap(), vec![1, 0]);
        }
    }

    #[test]
    fn ttts_symmetric_split() {
        let rule = TttsRule::new(0.5).unwrap();
        let c = [cand(10, 0.0, 1.0), cand(10, 0.0, 1.0)];
        let mut r = rng();
        let n = 100_000;
        let first = (0..n)
            .filter(|_| rule.allocate(&c, 1, Direction::Max, &mut r).unwrap()[0] == 1)
            .count() as f64
            / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((first - 0.5).abs() < 3.0 * se, "{first}");
    }

    #[test]
    fn epsilon_zero_matches_inner_on_shared_randomness() {
        let wrapped = EpsilonWrap::new(Box::new(TttsRule::new(0.5).unwrap()), 0.0).unwrap();
        let plain = TttsRule::new(0.5).unwrap();
        let c = [cand(5, 0.0, 1.0), cand(7, 0.3, 2.0), cand(9, 0.1, 1.0)];
        let (mut r1, mut r2) = (rng(), rng());
        for _ in 0..1000 {
            assert_eq!(
                wrapped.allocate(&c, 1, Direction::Max, &mut r1).unwrap(),
                plain.allocate(&c, 1, Direction::Max, &mut r2).unwrap()
            );
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let wrapped = EpsilonWrap::new(Box::new(AlwaysFirst), 1.0).unwrap();
        let c = [cand(5, 0.0, 1.0); 4];
        let mut r = rng();
        let n = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            let a = wrapped.allocate(&c, 1, Direction::Max, &mut r).unwrap();
            counts[a.iter().position(|&x| x == 1).unwrap()] += 1;
        }
        let se = (0.25 * 0.75 / n as f64).sqrt();
        for count in counts {
            assert!((count as f64 / n as f64 - 0.25).abs() < 3.0 * se);
        }
    }

    #[test]
    fn epsilon_mixture_share() {
        let wrapped = EpsilonWrap::new(Box::new(AlwaysFirst), 0.1).unwrap();
        let c = [cand(5, 0.0, 1.0); 3];
        let mut r = rng();
        let n = 100_000;
        let second = (0..n)
            .filter(|_| wrapped.allocate(&c, 1, Direction::Max, &mut r).unwrap()[1] == 1)
            .count() as f64
            / n as f64;
        let p = 0.1 / 3.0;
        assert!((second - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn uniform_split_keeps_binary_allocations() {
        let mut r = rng();
        for budget in 0..=5 {
            let a = EpsilonWrap::uniform(5, budget, &mut r);
            assert_eq!(a.iter().sum::<u32>(), budget);
            assert!(a.iter().all(|&x| x <= 1));
        }
        let a = EpsilonWrap::uniform(3, 7, &mut r);
        assert_eq!(a.iter().sum::<u32>(), 7);
        assert!(a.iter().all(|&x| x == 2 || x == 3));
    }

    #[test]
    fn parameters_are_validated() {
        assert!(TttsRule::new(1.5).is_err());
        assert!(EpsilonWrap::new(Box::new(EqualRule), -0.1).is_err());
        let spec = RuleSpec::Epsilon {
            epsilon: 2.0,
            inner: Box::new(RuleSpec::Kg),
        };
        assert!(matches!(spec.build(), Err(RuleError::Parameter { name: "epsilon", .. })));
    }

    #[test]
    fn rule_spec_roundtrips_through_toml() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Holder {
            rule: RuleSpec,
        }
        let h = Holder {
            rule: RuleSpec::Epsilon {
                epsilon: 0.1,
                inner: Box::new(RuleSpec::Ttts { beta: 0.5 }),
            },
        };
        let text = toml::to_string(&h).unwrap();
        let back: Holder = toml::from_str(&text).unwrap();
        assert_eq!(back, h);
        assert!(h.rule.needs_variance());
        assert!(!RuleSpec::Equal.needs_variance());
    }
}
