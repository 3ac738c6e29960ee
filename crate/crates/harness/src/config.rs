//! Experiment configuration files.
//!
//! A config is a TOML document whose `schema` key must equal [`SCHEMA`]. It
//! names one problem instance, the procedures to run on it, the budget grid
//! `N = (n0 + n1) k m` and where outputs go. Every problem found while
//! validating is reported together, before any simulation starts.

use std::fs;
use std::path::{Path, PathBuf};

use drrs_core::model::{mm_config, sc_config, Backend, ProblemInstance};
use drrs_core::procedures::GaaConfig;
use drrs_core::streams::StreamSpec;
use drrs_core::testbeds::{
    build_ambiguity_set, ground_truth_instance, AmbiguitySet, Family, InventoryParams,
    InventoryPolicy, InventoryTestbed, ParamDist, QueueParams, QueueTestbed,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA: &str = "drrs-experiment/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("cannot build the instance: {0}")]
    Instance(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub procedures: Vec<ProcedureEntry>,
    pub budget: BudgetSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Slippage configuration: alternative 1 at 0, all others at `gap`.
    Sc {
        k: usize,
        m: usize,
        #[serde(default = "default_gap")]
        gap: f64,
        #[serde(default = "default_variance")]
        variance: f64,
    },
    /// Monotone means `0.3 (i-1) - 0.1 (j-1)`.
    Mm {
        k: usize,
        m: usize,
        #[serde(default = "default_variance")]
        variance: f64,
    },
    /// Means and variances given row by row.
    Explicit {
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
    Inventory(InventorySpec),
    Queue(QueueSpec),
}

fn default_gap() -> f64 {
    0.5
}

fn default_variance() -> f64 {
    25.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyGrid {
    /// All 36 `(s, S)` pairs.
    Full,
    /// The 18 pairs with reorder points 240, 280 and 320.
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventorySpec {
    #[serde(default)]
    pub policy_grid: Option<PolicyGrid>,
    #[serde(default)]
    pub policies: Option<Vec<InventoryPolicy>>,
    pub demand_means: Vec<f64>,
    #[serde(default)]
    pub params: InventoryParams,
    #[serde(default = "default_inventory_truth_reps")]
    pub truth_reps: u64,
    #[serde(default)]
    pub truth_seed: u64,
}

fn default_inventory_truth_reps() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub staffing: Vec<u32>,
    /// Explicit ambiguity set; excludes `fit`.
    #[serde(default)]
    pub services: Option<Vec<ParamDist>>,
    /// Build the ambiguity set from draws of a known distribution.
    #[serde(default)]
    pub fit: Option<FitSpec>,
    #[serde(default)]
    pub params: QueueParams,
    #[serde(default = "default_queue_truth_reps")]
    pub truth_reps: u64,
    #[serde(default)]
    pub truth_seed: u64,
}

fn default_queue_truth_reps() -> u64 {
    5_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    /// The distribution the input data is drawn from.
    pub truth: ParamDist,
    #[serde(default = "default_observations")]
    pub observations: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_observations() -> usize {
    20
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: ProcedureKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcedureKind {
    Aa,
    /// Fully specified GAA; uses its own `n0`.
    Gaa(GaaConfig),
    /// GAA with a joint epsilon-wrapped TTTS rule; `n0` from the budget.
    GaaTtts {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    /// GAA with epsilon-wrapped KG rules; `n0` from the budget.
    GaaKg {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta() -> f64 {
    0.5
}

fn default_epsilon() -> f64 {
    0.1
}

/// What a procedure entry resolves to once the budget is known.
#[derive(Clone, Debug, PartialEq)]
pub enum Procedure {
    Aa,
    Gaa(GaaConfig),
}

impl Procedure {
    pub fn is_aa(&self) -> bool {
        matches!(self, Procedure::Aa)
    }

    /// Observations spent before the first round.
    pub fn init_cost(&self, k: usize, m: usize) -> u64 {
        let n0 = match self {
            Procedure::Aa => 1,
            Procedure::Gaa(c) => c.n0 as u64,
        };
        n0 * (k * m) as u64
    }
}

impl ProcedureEntry {
    pub fn resolve(&self, n0: u32) -> Procedure {
        match &self.kind {
            ProcedureKind::Aa => Procedure::Aa,
            ProcedureKind::Gaa(c) => Procedure::Gaa(c.clone()),
            ProcedureKind::GaaTtts { beta, epsilon } => Procedure::Gaa(GaaConfig::ttts(*beta, *epsilon, n0)),
            ProcedureKind::GaaKg { epsilon } => Procedure::Gaa(GaaConfig::kg(*epsilon, n0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default = "default_n0")]
    pub n0: u32,
    pub n1: Vec<u64>,
    pub replications: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_n0() -> u32 {
    1
}

impl BudgetSpec {
    /// `N = (n0 + n1) k m`.
    pub fn total(&self, n1: u64, k: usize, m: usize) -> u64 {
        (self.n0 as u64 + n1) * (k * m) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub plots: bool,
    /// Replications drawn as bar grids by the allocation suite.
    #[serde(default = "default_sample_paths")]
    pub sample_paths: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sample_paths() -> usize {
    2
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            plots: false,
            sample_paths: default_sample_paths(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Heavy-scenario cut: share above `theta / (k m)`.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Boundary between the best and runner-up worst-case means; the
    /// midpoint when absent.
    #[serde(default)]
    pub b_delta: Option<f64>,
}

fn default_theta() -> f64 {
    0.05
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            b_delta: None,
        }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub plots: bool,
    pub full_scale: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.budget.master_seed = seed;
        }
        if let Some(reps) = o.reps {
            self.budget.replications = reps;
        }
        if let Some(w) = o.workers {
            self.budget.workers = Some(w);
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        self.output.plots |= o.plots;
        if o.full_scale {
            match &mut self.instance {
                InstanceSpec::Sc { k, m, .. } | InstanceSpec::Mm { k, m, .. } => {
                    *k = 10;
                    *m = 5;
                }
                _ => {}
            }
        }
    }

    /// Grid dimensions when they are known without fitting or simulating.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match &self.instance {
            InstanceSpec::Sc { k, m, .. } | InstanceSpec::Mm { k, m, .. } => Some((*k, *m)),
            InstanceSpec::Explicit { means, .. } => Some((means.len(), means.first().map_or(0, Vec::len))),
            InstanceSpec::Inventory(spec) => {
                let k = match (&spec.policies, spec.policy_grid) {
                    (Some(p), None) => p.len(),
                    (None, Some(PolicyGrid::Full)) => 36,
                    (None, Some(PolicyGrid::Reduced)) => 18,
                    _ => return None,
                };
                Some((k, spec.demand_means.len()))
            }
            InstanceSpec::Queue(spec) => spec.services.as_ref().map(|s| (spec.staffing.len(), s.len())),
        }
    }

    pub fn procedures(&self) -> Vec<(String, Procedure)> {
        self.procedures
            .iter()
            .map(|p| (p.name.clone(), p.resolve(self.budget.n0)))
            .collect()
    }

    /// Every problem with the config; `need_procedures` is false for
    /// commands that do not run the configured procedures.
    pub fn problems(&self, need_procedures: bool) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != SCHEMA {
            out.push(format!("schema is {:?}, expected {SCHEMA:?}", self.schema));
        }
        out.extend(self.instance.problems());
        let dims = self.dims();
        if let Some((k, m)) = dims {
            if k < 2 {
                out.push(format!("instance needs at least 2 alternatives, got {k}"));
            }
            if m < 1 {
                out.push("instance needs at least 1 scenario per alternative".to_string());
            }
        }
        let b = &self.budget;
        if b.replications < 1 {
            out.push("budget.replications must be at least 1".to_string());
        }
        if b.n0 < 1 {
            out.push("budget.n0 must be at least 1".to_string());
        }
        if b.n1.is_empty() {
            out.push("budget.n1 must list at least one value".to_string());
        }
        if b.workers == Some(0) {
            out.push("budget.workers must be at least 1".to_string());
        }
        if need_procedures && self.procedures.is_empty() {
            out.push("no [[procedures]] configured".to_string());
        }
        for (idx, p) in self.procedures.iter().enumerate() {
            if p.name.trim().is_empty() {
                out.push(format!("procedure #{} has an empty name", idx + 1));
            }
            if p.name.contains([',', '"', '\n']) {
                out.push(format!("procedure name {:?} may not contain commas, quotes or newlines", p.name));
            }
            if self.procedures[..idx].iter().any(|q| q.name == p.name) {
                out.push(format!("procedure name {:?} is used twice", p.name));
            }
            let proc = p.resolve(b.n0);
            if let (Procedure::Gaa(c), Some((k, m))) = (&proc, dims) {
                if k >= 2 {
                    out.extend(c.problems(k, m).into_iter().map(|e| format!("procedure {:?}: {e}", p.name)));
                }
            }
            if let Some((k, m)) = dims {
                let init = proc.init_cost(k, m);
                for &n1 in &b.n1 {
                    let total = b.total(n1, k, m);
                    if total < init {
                        out.push(format!(
                            "procedure {:?}: N = {total} at n1 = {n1} is below its {init} initial observations",
                            p.name
                        ));
                    }
                }
            }
        }
        let t = &self.thresholds;
        if !(t.theta > 0.0 && t.theta < 1.0) {
            out.push(format!("thresholds.theta must lie in (0, 1), got {}", t.theta));
        }
        if let Some(bd) = t.b_delta {
            if !bd.is_finite() {
                out.push(format!("thresholds.b_delta must be finite, got {bd}"));
            }
        }
        out
    }

    pub fn validate(&self, need_procedures: bool) -> Result<(), ConfigError> {
        let problems = self.problems(need_procedures);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

impl InstanceSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |out: &mut Vec<String>, what: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("instance.{what} must be positive, got {v}"));
            }
        };
        match self {
            InstanceSpec::Sc { gap, variance, .. } => {
                positive(&mut out, "gap", *gap);
                positive(&mut out, "variance", *variance);
            }
            InstanceSpec::Mm { variance, .. } => positive(&mut out, "variance", *variance),
            InstanceSpec::Explicit { means, variances } => {
                let m = means.first().map_or(0, Vec::len);
                if means.iter().any(|r| r.len() != m) {
                    out.push("instance.means rows differ in length".to_string());
                }
                if variances.len() != means.len() || variances.iter().any(|r| r.len() != m) {
                    out.push("instance.variances must have the same shape as instance.means".to_string());
                }
                if means.iter().flatten().any(|x| !x.is_finite()) {
                    out.push("instance.means must be finite".to_string());
                }
                if variances.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
                    out.push("instance.variances must be positive".to_string());
                }
            }
            InstanceSpec::Inventory(spec) => {
                match (&spec.policies, spec.policy_grid) {
                    (Some(_), Some(_)) => out.push("set either instance.policies or instance.policy_grid, not both".to_string()),
                    (None, None) => out.push("inventory instance needs instance.policies or instance.policy_grid".to_string()),
                    _ => {}
                }
                for p in spec.policies.iter().flatten() {
                    if !(p.reorder_point < p.order_up_to) {
                        out.push(format!("policy (s={}, S={}) needs s < S", p.reorder_point, p.order_up_to));
                    }
                }
                if spec.demand_means.is_empty() {
                    out.push("instance.demand_means must list at least one demand mean".to_string());
                }
                if spec.demand_means.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
                    out.push("instance.demand_means must be nonnegative".to_string());
                }
                if spec.params.periods < 1 {
                    out.push("instance.params.periods must be at least 1".to_string());
                }
                if spec.truth_reps < 2 {
                    out.push("instance.truth_reps must be at least 2".to_string());
                }
            }
            InstanceSpec::Queue(spec) => {
                if spec.staffing.is_empty() || spec.staffing.contains(&0) {
                    out.push("instance.staffing must list positive staffing levels".to_string());
                }
                match (&spec.services, &spec.fit) {
                    (Some(_), Some(_)) => out.push("set either instance.services or instance.fit, not both".to_string()),
                    (None, None) => out.push("queue instance needs instance.services or instance.fit".to_string()),
                    (Some(s), None) if s.is_empty() => out.push("instance.services is empty".to_string()),
                    _ => {}
                }
                if let Some(fit) = &spec.fit {
                    if fit.observations < 2 {
                        out.push("instance.fit.observations must be at least 2".to_string());
                    }
                    if !(fit.alpha > 0.0 && fit.alpha < 1.0) {
                        out.push(format!("instance.fit.alpha must lie in (0, 1), got {}", fit.alpha));
                    }
                }
                let p = &spec.params;
                for (what, v) in [("interarrival_mean", p.interarrival_mean), ("patience_mean", p.patience_mean)] {
                    positive(&mut out, &format!("params.{what}"), v);
                }
                if p.arrivals < 1 {
                    out.push("instance.params.arrivals must be at least 1".to_string());
                }
                if spec.truth_reps < 2 {
                    out.push("instance.truth_reps must be at least 2".to_string());
                }
            }
        }
        out
    }

    pub fn is_testbed(&self) -> bool {
        matches!(self, InstanceSpec::Inventory(_) | InstanceSpec::Queue(_))
    }

    /// Builds the instance. Testbed instances get their means and variances
    /// from simulation, which can take a while.
    pub fn build(&self) -> Result<PreparedInstance, ConfigError> {
        let fail = |e: &dyn std::fmt::Display| ConfigError::Instance(e.to_string());
        match self {
            InstanceSpec::Sc { k, m, gap, variance } => {
                Ok(PreparedInstance::plain(sc_config(*k, *m, *gap, *variance).map_err(|e| fail(&e))?))
            }
            InstanceSpec::Mm { k, m, variance } => {
                Ok(PreparedInstance::plain(mm_config(*k, *m, *variance).map_err(|e| fail(&e))?))
            }
            InstanceSpec::Explicit { means, variances } => {
                let k = means.len();
                let m = means.first().map_or(0, Vec::len);
                let inst = ProblemInstance::new(
                    k,
                    m,
                    means.concat(),
                    variances.concat(),
                    Backend::Gaussian,
                )
                .map_err(|e| fail(&e))?;
                Ok(PreparedInstance::plain(inst))
            }
            InstanceSpec::Inventory(spec) => {
                let policies = match (&spec.policies, spec.policy_grid) {
                    (Some(p), _) => p.clone(),
                    (None, Some(PolicyGrid::Reduced)) => InventoryTestbed::reduced_policy_grid(),
                    _ => InventoryTestbed::full_policy_grid(),
                };
                let mut notes = vec![
                    "inventory dynamics: full backlogging; an order with zero lead time arrives in the period it is placed".to_string(),
                    format!("ground truth: {} replications per scenario, seed {}", spec.truth_reps, spec.truth_seed),
                ];
                if spec.policy_grid == Some(PolicyGrid::Reduced) {
                    notes.push("policies: 18 of the 36 (s,S) pairs, reorder points 240, 280 and 320".to_string());
                }
                let bed = InventoryTestbed {
                    policies,
                    demand_means: spec.demand_means.clone(),
                    params: spec.params.clone(),
                };
                let row_labels = bed.policies.iter().map(|p| format!("(s={};S={})", p.reorder_point, p.order_up_to)).collect();
                let col_labels = bed.demand_means.iter().map(|d| format!("demand_mean={d}")).collect();
                let instance = ground_truth_instance(Backend::Inventory(bed), spec.truth_reps, spec.truth_seed)
                    .map_err(|e| fail(&e))?;
                Ok(PreparedInstance {
                    instance,
                    notes,
                    fit: None,
                    row_labels,
                    col_labels,
                })
            }
            InstanceSpec::Queue(spec) => {
                let mut notes = vec![
                    format!(
                        "queue cost: c_A * abandonments + c_W * mean wait of served customers + c_S * servers over {} arrivals from an empty system, no warm-up",
                        spec.params.arrivals
                    ),
                    format!("ground truth: {} replications per scenario, seed {}", spec.truth_reps, spec.truth_seed),
                ];
                let (services, fit) = match (&spec.services, &spec.fit) {
                    (Some(s), _) => (s.clone(), None),
                    (None, Some(f)) => {
                        let set = fit_services(f).map_err(|e| fail(&e))?;
                        notes.push(format!(
                            "service ambiguity set: KS-retained MLE fits (alpha {}) to {} draws of {} with seed {}; the true service distribution is our choice",
                            f.alpha,
                            f.observations,
                            f.truth.label(),
                            f.seed
                        ));
                        notes.push("KS critical values ignore that parameters were fitted".to_string());
                        (set.members.clone(), Some(set))
                    }
                    (None, None) => return Err(ConfigError::Instance("queue needs services or fit".to_string())),
                };
                let bed = QueueTestbed {
                    staffing: spec.staffing.clone(),
                    services,
                    params: spec.params.clone(),
                };
                let row_labels = bed.staffing.iter().map(|s| format!("servers={s}")).collect();
                let col_labels = bed.services.iter().map(ParamDist::label).collect();
                let instance = ground_truth_instance(Backend::Queue(bed), spec.truth_reps, spec.truth_seed)
                    .map_err(|e| fail(&e))?;
                Ok(PreparedInstance {
                    instance,
                    notes,
                    fit,
                    row_labels,
                    col_labels,
                })
            }
        }
    }
}

/// Draws the input sample for a fitted ambiguity set and runs the KS step.
pub fn fit_services(spec: &FitSpec) -> Result<AmbiguitySet, drrs_core::testbeds::FitError> {
    let mut rng = StreamSpec::new(spec.seed, 0, 0).aux_rng(0);
    let xs: Vec<f64> = (0..spec.observations).map(|_| spec.truth.sample(&mut rng)).collect();
    build_ambiguity_set(&xs, &Family::ALL, spec.alpha)
}

/// A built instance plus what every output header should say about it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedInstance {
    pub instance: ProblemInstance,
    /// Modeling choices to flag in output headers.
    pub notes: Vec<String>,
    pub fit: Option<AmbiguitySet>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl PreparedInstance {
    pub fn plain(instance: ProblemInstance) -> Self {
        Self {
            row_labels: (1..=instance.k).map(|i| format!("alternative {i}")).collect(),
            col_labels: (1..=instance.m).map(|j| format!("distribution {j}")).collect(),
            instance,
            notes: Vec::new(),
            fit: None,
        }
    }

    /// `b_delta` from the thresholds, or the midpoint of the best and
    /// runner-up worst-case means.
    pub fn boundary(&self, thresholds: &Thresholds) -> f64 {
        thresholds.b_delta.unwrap_or_else(|| self.instance.default_boundary())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "drrs-experiment/1"

[instance]
preset = "sc"
k = 3
m = 2

[[procedures]]
name = "AA"
kind = "aa"

[[procedures]]
name = "GAA-TTTS"
kind = "gaa_ttts"
beta = 0.5

[budget]
n0 = 2
n1 = [10, 20]
replications = 5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        assert!(c.problems(true).is_empty(), "{:?}", c.problems(true));
        assert_eq!(c.budget.total(10, 3, 2), 72);
        assert_eq!(c.thresholds.theta, 0.05);
        let procs = c.procedures();
        assert_eq!(procs[1].1, Procedure::Gaa(GaaConfig::ttts(0.5, 0.1, 2)));
        let built = c.instance.build().unwrap();
        assert_eq!(built.boundary(&c.thresholds), 0.25);
    }

    #[test]
    fn problems_are_listed_together() {
        let text = MINIMAL
            .replace("drrs-experiment/1", "drrs-experiment/0")
            .replace("replications = 5", "replications = 0")
            .replace("n1 = [10, 20]", "n1 = []")
            .replace("name = \"GAA-TTTS\"", "name = \"AA\"");
        let c: ExperimentConfig = toml::from_str(&text).unwrap();
        let p = c.problems(true);
        assert_eq!(p.len(), 4, "{p:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("replications = 5", "replications = 5\nreplicatoins = 6");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn variance_rules_need_two_initial_observations() {
        let text = MINIMAL.replace("n0 = 2", "n0 = 1");
        let c: ExperimentConfig = toml::from_str(&text).unwrap();
        assert!(c.problems(true).iter().any(|p| p.contains("n0 >= 2")));
    }

    #[test]
    fn overrides_replace_seed_reps_and_scale() {
        let mut c: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            reps: Some(11),
            full_scale: true,
            ..Overrides::default()
        });
        assert_eq!((c.budget.master_seed, c.budget.replications), (9, 11));
        assert_eq!(c.dims(), Some((10, 5)));
    }

    #[test]
    fn inventory_spec_needs_exactly_one_policy_source() {
        let spec = InstanceSpec::Inventory(InventorySpec {
            policy_grid: None,
            policies: None,
            demand_means: vec![300.0],
            params: InventoryParams::default(),
            truth_reps: 10,
            truth_seed: 0,
        });
        assert_eq!(spec.problems().len(), 1);
    }
}
