//! Statistical and pathwise checks of the AA bounds, written as
//! `verify.csv` with columns `check, statistic, bound, margin, pass`.
//!
//! A check passes when its margin is nonnegative. Margins already include
//! the Monte Carlo slack each check allows (3 standard errors, or 3 combined
//! standard errors when two estimates are compared).

use std::path::PathBuf;

use drrs_core::analysis::{
    exit_time_tail_mc, pathwise_k_step_check, pcs_lower_bound_curve, pics_upper_bound, tail_bound,
    zero_exit_bound, PicsBoundForm, TruncationGuard,
};
use drrs_core::model::Backend;

use crate::config::{ConfigError, ExperimentConfig, PreparedInstance, Procedure};
use crate::experiment::{run_procedure, EstimateRow, Runner};
use crate::output::CsvFile;
use crate::suites::boundary;
use crate::HarnessError;

/// Boundaries and sample sizes of the exit-time tail checks.
pub const TAIL_BOUNDARIES: [f64; 3] = [0.5, 1.0, 2.0];
pub const TAIL_SIZES: [u64; 3] = [1, 5, 20];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: String, statistic: f64, bound: f64, margin: f64) -> Self {
        Self {
            name,
            statistic,
            bound,
            margin,
            pass: margin >= 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn require_gaussian(prepared: &PreparedInstance) -> Result<(), HarnessError> {
    if prepared.instance.backend != Backend::Gaussian {
        return Err(ConfigError::Invalid(vec![
            "verify needs a normal instance (preset sc, mm or explicit); the bounds assume normal observations".to_string(),
        ])
        .into());
    }
    Ok(())
}

/// Exit-time tails of standard normal paths for every `b` in `boundaries`
/// and `n` in `sizes`, plus the probability of never exiting.
pub fn exit_tail_checks(
    boundaries: &[f64],
    sizes: &[u64],
    reps: u64,
    master_seed: u64,
    runner: &Runner,
) -> Result<Vec<Check>, HarnessError> {
    let guard = TruncationGuard::default();
    let mut out = Vec::new();
    for &b in boundaries {
        let est = runner.install(|| exit_time_tail_mc(b, sizes, reps, master_seed, &guard))?;
        for &(n, p) in &est.exceed {
            let bound = tail_bound(n, b)?;
            out.push(Check::new(
                format!("exit tail Pr{{U({b}) > {n}}}"),
                p.estimate(),
                bound,
                bound + 3.0 * p.se() - p.estimate(),
            ));
        }
        let bound = zero_exit_bound(b)?;
        out.push(Check::new(
            format!("never exits Pr{{U({b}) = 0}}"),
            est.zero.estimate(),
            bound,
            est.zero.estimate() + 3.0 * est.zero.se() - bound,
        ));
        out.push(Check::new(
            format!("exit tail unresolved paths b={b}"),
            est.unresolved as f64,
            0.0,
            0.0 - est.unresolved as f64,
        ));
    }
    Ok(out)
}

/// Empirical PICS of AA against the closed-form bound, and empirical PCS of
/// AA against the Monte Carlo lower bound, at every configured budget.
pub fn verify_bounds(config: &ExperimentConfig, prepared: &PreparedInstance, runner: &Runner) -> Result<VerifyReport, HarnessError> {
    require_gaussian(prepared)?;
    let b = boundary(config, prepared)?;
    let inst = &prepared.instance;
    let reps = config.budget.replications;
    let seed = config.budget.master_seed;
    let mut checks = exit_tail_checks(&TAIL_BOUNDARIES, &TAIL_SIZES, reps, seed, runner)?;
    let budgets: Vec<u64> = config.budget.n1.iter().map(|&n1| config.budget.total(n1, inst.k, inst.m)).collect();
    // independent streams for the lower bound, so the two SEs combine
    let guard = TruncationGuard::default();
    let lower = runner.install(|| pcs_lower_bound_curve(inst, &budgets, b, reps, seed.wrapping_add(1), &guard))?;
    for (&budget, lb) in budgets.iter().zip(&lower) {
        let records = runner.replicate(reps, |r| run_procedure(inst, &Procedure::Aa, budget, seed, r))?;
        let e = EstimateRow::from_outcomes("AA", 0, budget, records.iter().map(|r| r.correct));
        let bound = pics_upper_bound(inst, budget, b, PicsBoundForm::Derived)?;
        checks.push(Check::new(
            format!("AA PICS envelope N={budget}"),
            e.pics_hat,
            bound,
            bound + 3.0 * e.se - e.pics_hat,
        ));
        let p = lb.proportion;
        let slack = 3.0 * (e.se * e.se + p.se() * p.se()).sqrt();
        checks.push(Check::new(
            format!("AA PCS lower bound N={budget}"),
            e.pcs_hat,
            p.estimate(),
            e.pcs_hat - (p.estimate() - slack),
        ));
        let frac = lb.unresolved as f64 / reps as f64;
        checks.push(Check::new(format!("PCS lower bound unresolved fraction N={budget}"), frac, 0.01, 0.01 - frac));
    }
    let mut report = VerifyReport {
        checks,
        files: Vec::new(),
    };
    report.files.push(write_checks(config, prepared, &report.checks, b)?);
    Ok(report)
}

/// The k-step count of the best alternative never exceeds `S(b)` on resolved
/// replications, with AA and the oracle reading the same observations.
pub fn verify_k_steps(config: &ExperimentConfig, prepared: &PreparedInstance, runner: &Runner) -> Result<VerifyReport, HarnessError> {
    require_gaussian(prepared)?;
    let b = boundary(config, prepared)?;
    let inst = &prepared.instance;
    let reps = config.budget.replications;
    let seed = config.budget.master_seed;
    let guard = TruncationGuard::default();
    let mut per_rep = CsvFile::create(
        &config.output.dir.join("k_steps.csv"),
        &prepared.notes,
        &["replication", "N", "s_value", "best_k_steps", "resolved", "holds"],
    )?;
    let mut checks = Vec::new();
    for &n1 in &config.budget.n1 {
        let budget = config.budget.total(n1, inst.k, inst.m);
        let results = runner.replicate(reps, |r| pathwise_k_step_check(inst, budget, b, seed, r, &guard))?;
        for c in &results {
            per_rep.row([
                c.replication.to_string(),
                budget.to_string(),
                c.s_value.to_string(),
                c.best_k_steps.to_string(),
                c.resolved.to_string(),
                c.holds.to_string(),
            ])?;
        }
        let violations = results.iter().filter(|c| c.resolved && !c.holds).count() as f64;
        let unresolved = results.iter().filter(|c| !c.resolved).count() as f64 / reps as f64;
        checks.push(Check::new(format!("pathwise k-step violations N={budget}"), violations, 0.0, 0.0 - violations));
        checks.push(Check::new(format!("pathwise unresolved fraction N={budget}"), unresolved, 0.01, 0.01 - unresolved));
    }
    let mut report = VerifyReport {
        checks,
        files: vec![per_rep.finish()?],
    };
    report.files.push(write_checks(config, prepared, &report.checks, b)?);
    Ok(report)
}

fn write_checks(config: &ExperimentConfig, prepared: &PreparedInstance, checks: &[Check], b: f64) -> Result<PathBuf, HarnessError> {
    let mut notes = prepared.notes.clone();
    notes.push(format!("b_delta = {b}; replications = {}", config.budget.replications));
    let mut f = CsvFile::create(&config.output.dir.join("verify.csv"), &notes, &["check", "statistic", "bound", "margin", "pass"])?;
    for c in checks {
        f.row([
            c.name.clone(),
            c.statistic.to_string(),
            c.bound.to_string(),
            c.margin.to_string(),
            c.pass.to_string(),
        ])?;
    }
    f.finish()
}
