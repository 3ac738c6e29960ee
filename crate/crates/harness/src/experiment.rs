//! Parallel macro-replications over a budget grid.
//!
//! Replication `r` of every cell reads the streams keyed by
//! `(master_seed, r)`, so results do not depend on which worker ran it.
//! Cells run one after another; replications inside a cell fan out over the
//! worker pool and are collected in replication order.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use drrs_core::model::ProblemInstance;
use drrs_core::procedures::{run_aa, run_gaa, ProcedureError, RunRecord};
use drrs_core::streams::StreamSpec;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::config::{ExperimentConfig, PreparedInstance, Procedure};
use crate::output::{write_text, CsvFile};
use crate::svg::{self, LinePlot, Series};
use crate::HarnessError;

pub struct Runner {
    pool: ThreadPool,
}

impl Runner {
    /// A pool of `workers` threads, or one per available CPU.
    pub fn new(workers: Option<usize>) -> Result<Self, HarnessError> {
        let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Ok(Self {
            pool: ThreadPoolBuilder::new().num_threads(n.max(1)).build()?,
        })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), ..., f(reps - 1)` on the pool, in replication order.
    pub fn replicate<T, E, F>(&self, reps: u64, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64) -> Result<T, E> + Sync + Send,
    {
        self.pool.install(|| (0..reps).into_par_iter().map(f).collect())
    }

    /// Runs `f` inside the pool so nested rayon work uses its threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.pool.install(f)
    }
}

/// One macro-replication of `procedure` at budget `budget`.
pub fn run_procedure(
    instance: &ProblemInstance,
    procedure: &Procedure,
    budget: u64,
    master_seed: u64,
    replication: u64,
) -> Result<RunRecord, ProcedureError> {
    let spec = StreamSpec::new(master_seed, replication, budget);
    match procedure {
        Procedure::Aa => run_aa(instance, budget, &spec),
        Procedure::Gaa(config) => run_gaa(instance, budget, config, &spec),
    }
}

/// All replications of one procedure at one budget.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub procedure: String,
    pub n1: u64,
    pub budget: u64,
    pub records: Vec<RunRecord>,
    pub wall_time: Duration,
}

impl CellResult {
    pub fn estimate(&self) -> EstimateRow {
        EstimateRow::from_outcomes(&self.procedure, self.n1, self.budget, self.records.iter().map(|r| r.correct))
    }
}

/// PCS/PICS estimate of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub procedure: String,
    pub n1: u64,
    pub budget: u64,
    pub replications: u64,
    pub correct: u64,
    pub pcs_hat: f64,
    pub pics_hat: f64,
    /// `sqrt(p (1 - p) / R)`.
    pub se: f64,
}

impl EstimateRow {
    pub fn from_outcomes(procedure: &str, n1: u64, budget: u64, outcomes: impl IntoIterator<Item = bool>) -> Self {
        let (mut correct, mut replications) = (0u64, 0u64);
        for ok in outcomes {
            correct += ok as u64;
            replications += 1;
        }
        let pcs_hat = if replications == 0 { 0.0 } else { correct as f64 / replications as f64 };
        Self {
            procedure: procedure.to_string(),
            n1,
            budget,
            replications,
            correct,
            pcs_hat,
            pics_hat: (replications - correct) as f64 / replications.max(1) as f64,
            se: (pcs_hat * (1.0 - pcs_hat) / replications.max(1) as f64).sqrt(),
        }
    }

    /// `pcs_hat +- 2 se`, clipped to `[0, 1]`.
    pub fn ci(&self) -> (f64, f64) {
        ((self.pcs_hat - 2.0 * self.se).max(0.0), (self.pcs_hat + 2.0 * self.se).min(1.0))
    }
}

/// Every configured procedure at every budget, procedure-major.
pub fn run_grid(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    runner: &Runner,
) -> Result<Vec<CellResult>, HarnessError> {
    let inst = &prepared.instance;
    let seed = config.budget.master_seed;
    let mut cells = Vec::new();
    for (name, procedure) in config.procedures() {
        if let Procedure::Gaa(c) = &procedure {
            c.validate(inst.k, inst.m)?;
        }
        for &n1 in &config.budget.n1 {
            let budget = config.budget.total(n1, inst.k, inst.m);
            let start = Instant::now();
            let records = runner.replicate(config.budget.replications, |r| {
                run_procedure(inst, &procedure, budget, seed, r)
            })?;
            cells.push(CellResult {
                procedure: name.clone(),
                n1,
                budget,
                records,
                wall_time: start.elapsed(),
            });
        }
    }
    Ok(cells)
}

pub struct RunOutcome {
    pub cells: Vec<CellResult>,
    pub files: Vec<PathBuf>,
}

/// Runs the grid and writes `estimates.csv`, `records.csv`, `timings.csv`
/// (and `fit_report.csv` for fitted ambiguity sets) under the output dir.
pub fn run_experiment(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    runner: &Runner,
) -> Result<RunOutcome, HarnessError> {
    let cells = run_grid(config, prepared, runner)?;
    let dir = &config.output.dir;
    let mut files = vec![
        write_estimates(&dir.join("estimates.csv"), config, prepared, &cells)?,
        write_records(&dir.join("records.csv"), prepared, &cells)?,
        write_timings(&dir.join("timings.csv"), &cells)?,
    ];
    if prepared.fit.is_some() {
        files.push(write_fit_report(&dir.join("fit_report.csv"), prepared)?);
    }
    if config.output.plots {
        let plot = pcs_plot(&cells, "PCS by budget");
        files.push(write_text(&dir.join("pcs.svg"), &svg::line_plot(&plot))?);
    }
    Ok(RunOutcome { cells, files })
}

pub fn write_estimates(
    path: &Path,
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    cells: &[CellResult],
) -> Result<PathBuf, HarnessError> {
    let mut f = CsvFile::create(
        path,
        &prepared.notes,
        &["procedure", "n0", "n1", "N", "replications", "correct", "pcs_hat", "pics_hat", "se", "ci_low", "ci_high"],
    )?;
    for cell in cells {
        let e = cell.estimate();
        let (lo, hi) = e.ci();
        f.row([
            e.procedure.clone(),
            config.budget.n0.to_string(),
            e.n1.to_string(),
            e.budget.to_string(),
            e.replications.to_string(),
            e.correct.to_string(),
            e.pcs_hat.to_string(),
            e.pics_hat.to_string(),
            e.se.to_string(),
            lo.to_string(),
            hi.to_string(),
        ])?;
    }
    f.finish()
}

pub fn write_records(path: &Path, prepared: &PreparedInstance, cells: &[CellResult]) -> Result<PathBuf, HarnessError> {
    let inst = &prepared.instance;
    let mut header: Vec<String> = ["replication", "procedure", "n1", "N", "selection", "correct", "consumed", "rounds"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=inst.k {
        for j in 1..=inst.m {
            header.push(format!("n_{i}_{j}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut f = CsvFile::create(path, &prepared.notes, &header_refs)?;
    for cell in cells {
        for (rep, rec) in cell.records.iter().enumerate() {
            f.row(record_fields(rep as u64, cell, rec))?;
        }
    }
    f.finish()
}

/// One `records.csv` row.
pub fn record_fields(replication: u64, cell: &CellResult, rec: &RunRecord) -> Vec<String> {
    let mut row = vec![
        replication.to_string(),
        cell.procedure.clone(),
        cell.n1.to_string(),
        cell.budget.to_string(),
        rec.selection.to_string(),
        (rec.correct as u8).to_string(),
        rec.consumed.to_string(),
        rec.rounds.to_string(),
    ];
    row.extend(rec.sample_sizes.iter().map(u64::to_string));
    row
}

pub fn write_timings(path: &Path, cells: &[CellResult]) -> Result<PathBuf, HarnessError> {
    let mut f = CsvFile::create(path, &[], &["procedure", "n1", "N", "wall_time_s"])?;
    for cell in cells {
        f.row([
            cell.procedure.clone(),
            cell.n1.to_string(),
            cell.budget.to_string(),
            format!("{:.3}", cell.wall_time.as_secs_f64()),
        ])?;
    }
    f.finish()
}

pub fn write_fit_report(path: &Path, prepared: &PreparedInstance) -> Result<PathBuf, HarnessError> {
    let mut f = CsvFile::create(
        path,
        &prepared.notes,
        &["family", "parameters", "ks_statistic", "critical_value", "retained", "issue"],
    )?;
    for fit in prepared.fit.iter().flat_map(|s| &s.report) {
        f.row([
            fit.family.to_string(),
            fit.params.as_ref().map(|p| p.label()).unwrap_or_default(),
            crate::output::opt(fit.ks_statistic),
            fit.critical_value.to_string(),
            fit.retained.to_string(),
            fit.issue.as_ref().map(|i| i.to_string()).unwrap_or_default(),
        ])?;
    }
    f.finish()
}

/// PCS against `N`, one series per procedure.
pub fn pcs_plot(cells: &[CellResult], title: &str) -> LinePlot {
    let mut series: Vec<Series> = Vec::new();
    for cell in cells {
        let e = cell.estimate();
        match series.iter_mut().find(|s| s.label == cell.procedure) {
            Some(s) => s.points.push((cell.budget as f64, e.pcs_hat)),
            None => series.push(Series::new(&cell.procedure, vec![(cell.budget as f64, e.pcs_hat)])),
        }
    }
    LinePlot {
        title: title.to_string(),
        x_label: "total budget N".to_string(),
        y_label: "empirical PCS".to_string(),
        log_y: false,
        floor: None,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn estimate_row_arithmetic() {
        let e = EstimateRow::from_outcomes("AA", 1, 10, [true, true, false, true]);
        assert_eq!((e.correct, e.replications), (3, 4));
        assert_eq!(e.pcs_hat + e.pics_hat, 1.0);
        assert!((e.se - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        let one = EstimateRow::from_outcomes("AA", 1, 10, [false]);
        assert_eq!((one.pcs_hat, one.se), (0.0, 0.0));
    }

    #[test]
    fn two_se_interval_covers_about_95_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (p, reps, trials) = (0.3, 400, 1000);
        let covered = (0..trials)
            .filter(|_| {
                let e = EstimateRow::from_outcomes("stub", 0, 0, (0..reps).map(|_| rng.random::<f64>() < p));
                let (lo, hi) = e.ci();
                lo <= p && p <= hi
            })
            .count();
        let coverage = covered as f64 / trials as f64;
        assert!((coverage - 0.95).abs() < 0.03, "coverage {coverage}");
    }

    #[test]
    fn replicate_keeps_replication_order() {
        let runner = Runner::new(Some(3)).unwrap();
        let out: Vec<u64> = runner.replicate(100, |r| Ok::<_, ()>(r * r)).unwrap();
        assert_eq!(out, (0..100).map(|r| r * r).collect::<Vec<_>>());
    }
}
