//! The experiment suites. Each one runs the configured grid through
//! [`run_experiment`], then writes its own table (and plot when enabled).

use std::path::PathBuf;

use drrs_core::analysis::{allocation_pattern_with, pics_upper_bound, worst_case_miss_bound_total, AnalysisError, PicsBoundForm};

use crate::config::{ConfigError, ExperimentConfig, PreparedInstance, Procedure};
use crate::experiment::{run_experiment, CellResult, Runner};
use crate::output::{opt, slug, write_text, CsvFile};
use crate::svg::{self, BarPanel, LinePlot, Series};
use crate::HarnessError;

/// Files written and a few human-readable summary lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// The configured (or midpoint) boundary, checked to lie strictly between the
/// best and runner-up worst-case means.
pub fn boundary(config: &ExperimentConfig, prepared: &PreparedInstance) -> Result<f64, HarnessError> {
    let inst = &prepared.instance;
    let b = prepared.boundary(&config.thresholds);
    let wc = inst.worst_case_means();
    let best = inst.true_best();
    let high = wc
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &w)| w)
        .fold(f64::INFINITY, f64::min);
    if b > wc[best] && b < high {
        Ok(b)
    } else {
        Err(ConfigError::Invalid(vec![format!(
            "thresholds.b_delta = {b} must lie strictly between the best worst-case mean {} and the runner-up {high}",
            wc[best]
        )])
        .into())
    }
}

fn by_procedure(cells: &[CellResult]) -> Vec<(&str, Vec<&CellResult>)> {
    let mut out: Vec<(&str, Vec<&CellResult>)> = Vec::new();
    for cell in cells {
        match out.iter_mut().find(|(name, _)| *name == cell.procedure) {
            Some((_, v)) => v.push(cell),
            None => out.push((&cell.procedure, vec![cell])),
        }
    }
    out
}

/// PICS against `N` on a log scale, with the closed-form bound for AA.
pub fn pics_decay(config: &ExperimentConfig, prepared: &PreparedInstance, runner: &Runner) -> Result<SuiteReport, HarnessError> {
    let b = boundary(config, prepared)?;
    let outcome = run_experiment(config, prepared, runner)?;
    let inst = &prepared.instance;
    let reps = config.budget.replications;
    let floor = 1.0 / (10.0 * reps as f64);
    let mut notes = prepared.notes.clone();
    notes.push(format!("b_delta = {b}; PICS estimates of 0 are plotted at 1/(10R) = {floor}"));
    let path = config.output.dir.join("pics_decay.csv");
    let mut f = CsvFile::create(
        &path,
        &notes,
        &["procedure", "n1", "N", "replications", "pics_hat", "se", "plotted_pics", "pics_bound", "pics_bound_compact", "within_bound"],
    )?;
    let procedures = config.procedures();
    let mut report = SuiteReport::default();
    let mut series = Vec::new();
    let mut bound_series = Vec::new();
    for (name, cells) in by_procedure(&outcome.cells) {
        let is_aa = procedures.iter().any(|(n, p)| n == name && p.is_aa());
        let mut points = Vec::new();
        let mut bound_points = Vec::new();
        for cell in &cells {
            let e = cell.estimate();
            let (bound, compact, within) = if is_aa {
                let bound = pics_upper_bound(inst, cell.budget, b, PicsBoundForm::Derived)?;
                let compact = pics_upper_bound(inst, cell.budget, b, PicsBoundForm::Compact)?;
                bound_points.push((cell.budget as f64, bound));
                (Some(bound), Some(compact), Some(e.pics_hat <= bound + 3.0 * e.se))
            } else {
                (None, None, None)
            };
            f.row([
                name.to_string(),
                cell.n1.to_string(),
                cell.budget.to_string(),
                e.replications.to_string(),
                e.pics_hat.to_string(),
                e.se.to_string(),
                e.pics_hat.max(floor).to_string(),
                opt(bound),
                opt(compact),
                within.map(|w| w.to_string()).unwrap_or_default(),
            ])?;
            points.push((cell.budget as f64, e.pics_hat));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let decreasing = ys.windows(2).all(|w| w[1] < w[0]);
        let slope = drrs_core::analysis::log_slope(&xs, &ys);
        report.lines.push(format!(
            "{name}: log-PICS slope per unit N {}, strictly decreasing: {decreasing}",
            slope.map_or("n/a".to_string(), |s| format!("{s:.3e}"))
        ));
        series.push(Series::new(name, points));
        if !bound_points.is_empty() {
            bound_series.push(Series {
                dashed: true,
                ..Series::new(&format!("{name} bound"), bound_points)
            });
        }
    }
    report.files = outcome.files;
    report.files.push(f.finish()?);
    if config.output.plots {
        series.extend(bound_series);
        let plot = LinePlot {
            title: "PICS decay".to_string(),
            x_label: "total budget N".to_string(),
            y_label: "empirical PICS".to_string(),
            log_y: true,
            floor: Some(floor),
            series,
        };
        report.files.push(write_text(&config.output.dir.join("pics_decay.svg"), &svg::line_plot(&plot))?);
    }
    Ok(report)
}

/// Per-scenario sample sizes: heavy-set counts, whether the best alternative
/// has all its scenarios heavy, and how often a non-best alternative's most
/// sampled scenario is not its worst case.
pub fn allocation(config: &ExperimentConfig, prepared: &PreparedInstance, runner: &Runner) -> Result<SuiteReport, HarnessError> {
    let b = boundary(config, prepared)?;
    let outcome = run_experiment(config, prepared, runner)?;
    let inst = &prepared.instance;
    let (k, m) = (inst.k, inst.m);
    let theta = config.thresholds.theta;
    let span = k + m - 1;
    let best = inst.true_best();
    let wc_cols: Vec<usize> = (0..k).map(|i| inst.worst_case_col(i)).collect();
    let mut notes = prepared.notes.clone();
    notes.push(format!(
        "surrogate: heavy_count, additive and worst_case_missed are finite-budget stand-ins for limit statements; heavy means share > theta/(k m), theta = {theta}"
    ));
    let dir = &config.output.dir;
    let mut per_rep = CsvFile::create(
        &dir.join("allocation.csv"),
        &notes,
        &["replication", "procedure", "n1", "N", "correct", "heavy_count", "span", "additive", "best_all_heavy", "worst_case_missed"],
    )?;
    let mut summary = CsvFile::create(
        &dir.join("allocation_summary.csv"),
        &notes,
        &[
            "procedure",
            "n1",
            "N",
            "replications",
            "correct",
            "additive_fraction",
            "best_all_heavy_fraction",
            "worst_case_miss_fraction",
            "worst_case_miss_se",
            "worst_case_miss_bound",
        ],
    )?;
    let procedures = config.procedures();
    let mut report = SuiteReport::default();
    for cell in &outcome.cells {
        let n0 = match procedures.iter().find(|(n, _)| *n == cell.procedure).map(|(_, p)| p) {
            Some(Procedure::Gaa(c)) => c.n0,
            _ => 1,
        };
        let (mut additive, mut best_heavy, mut missed, mut correct) = (0u64, 0u64, 0u64, 0u64);
        for (rep, rec) in cell.records.iter().enumerate() {
            let pattern = allocation_pattern_with(rec, theta, &wc_cols)?;
            let is_additive = pattern.heavy_count == span;
            let all_heavy = pattern.heavy[best * m..(best + 1) * m].iter().all(|&h| h);
            let miss = (0..k).any(|i| i != best && !pattern.worst_case_most_sampled[i]);
            if rec.correct {
                correct += 1;
                additive += is_additive as u64;
                best_heavy += all_heavy as u64;
            }
            missed += miss as u64;
            per_rep.row([
                rep.to_string(),
                cell.procedure.clone(),
                cell.n1.to_string(),
                cell.budget.to_string(),
                rec.correct.to_string(),
                pattern.heavy_count.to_string(),
                span.to_string(),
                is_additive.to_string(),
                all_heavy.to_string(),
                miss.to_string(),
            ])?;
        }
        let reps = cell.records.len() as f64;
        let frac = |x: u64, of: u64| if of == 0 { 0.0 } else { x as f64 / of as f64 };
        let miss_p = frac(missed, cell.records.len() as u64);
        let bound = match worst_case_miss_bound_total(inst, b, n0) {
            Ok(v) => Some(v),
            Err(AnalysisError::Inapplicable(_)) => None,
            Err(e) => return Err(e.into()),
        };
        summary.row([
            cell.procedure.clone(),
            cell.n1.to_string(),
            cell.budget.to_string(),
            cell.records.len().to_string(),
            correct.to_string(),
            frac(additive, correct).to_string(),
            frac(best_heavy, correct).to_string(),
            miss_p.to_string(),
            (miss_p * (1.0 - miss_p) / reps).sqrt().to_string(),
            opt(bound),
        ])?;
        report.lines.push(format!(
            "{} at N = {}: {}/{} correct; heavy count = {span} in {:.1}% of correct runs; best fully heavy in {:.1}%; worst case not most sampled in {:.1}% of runs (surrogates)",
            cell.procedure,
            cell.budget,
            correct,
            cell.records.len(),
            100.0 * frac(additive, correct),
            100.0 * frac(best_heavy, correct),
            100.0 * miss_p
        ));
    }
    report.files = outcome.files;
    report.files.push(per_rep.finish()?);
    report.files.push(summary.finish()?);
    if config.output.plots {
        for (name, cells) in by_procedure(&outcome.cells) {
            let cell = cells.last().expect("every procedure has a cell");
            let cut = theta / (k * m) as f64;
            let panels: Vec<BarPanel> = cell
                .records
                .iter()
                .take(config.output.sample_paths)
                .enumerate()
                .map(|(rep, rec)| BarPanel {
                    title: format!("replication {rep}, N = {}", cell.budget),
                    groups: rec.sample_sizes.chunks(m).map(|row| row.iter().map(|&n| n as f64).collect()).collect(),
                    cut: Some(cut * rec.sample_sizes.iter().sum::<u64>() as f64),
                })
                .collect();
            if panels.is_empty() {
                continue;
            }
            let svg = svg::bar_grid(&format!("{name}: sample sizes per scenario"), "sample size n_ij", &panels);
            report.files.push(write_text(&dir.join(format!("allocation_{}.svg", slug(name))), &svg)?);
        }
    }
    Ok(report)
}

fn pcs_by_n1_plot(cells: &[CellResult], title: &str) -> LinePlot {
    LinePlot {
        title: title.to_string(),
        x_label: "n1 (N = (n0 + n1) k m)".to_string(),
        y_label: "empirical PCS".to_string(),
        log_y: false,
        floor: None,
        series: by_procedure(cells)
            .into_iter()
            .map(|(name, cs)| Series::new(name, cs.iter().map(|c| (c.n1 as f64, c.estimate().pcs_hat)).collect()))
            .collect(),
    }
}

/// PCS against `n1` for GAA variants, with a step-by-step monotonicity check.
pub fn gaa_consistency(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    runner: &Runner,
) -> Result<SuiteReport, HarnessError> {
    let outcome = run_experiment(config, prepared, runner)?;
    let mut f = CsvFile::create(
        &config.output.dir.join("gaa_consistency.csv"),
        &prepared.notes,
        &["procedure", "n1", "N", "replications", "pcs_hat", "se", "ci_low", "ci_high", "step_within_2se"],
    )?;
    let mut report = SuiteReport::default();
    for (name, cells) in by_procedure(&outcome.cells) {
        let mut all_ok = true;
        let mut prev: Option<(f64, f64)> = None;
        for cell in &cells {
            let e = cell.estimate();
            let (lo, hi) = e.ci();
            let step = prev.map(|(p, se)| e.pcs_hat >= p - 2.0 * (se * se + e.se * e.se).sqrt());
            all_ok &= step.unwrap_or(true);
            f.row([
                name.to_string(),
                cell.n1.to_string(),
                cell.budget.to_string(),
                e.replications.to_string(),
                e.pcs_hat.to_string(),
                e.se.to_string(),
                lo.to_string(),
                hi.to_string(),
                step.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
            prev = Some((e.pcs_hat, e.se));
        }
        let last = cells.last().map_or(0.0, |c| c.estimate().pcs_hat);
        report.lines.push(format!("{name}: PCS nondecreasing in n1 within 2 SE: {all_ok}; final PCS {last:.4}"));
    }
    report.files = outcome.files;
    report.files.push(f.finish()?);
    if config.output.plots {
        let plot = pcs_by_n1_plot(&outcome.cells, "GAA consistency");
        report.files.push(write_text(&config.output.dir.join("gaa_consistency.svg"), &svg::line_plot(&plot))?);
    }
    Ok(report)
}

/// Side-by-side PCS of every configured procedure.
pub fn compare(config: &ExperimentConfig, prepared: &PreparedInstance, runner: &Runner) -> Result<SuiteReport, HarnessError> {
    let outcome = run_experiment(config, prepared, runner)?;
    let groups = by_procedure(&outcome.cells);
    let mut header = vec!["n1".to_string(), "N".to_string()];
    for (name, _) in &groups {
        header.push(format!("{name} pcs"));
        header.push(format!("{name} se"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut f = CsvFile::create(&config.output.dir.join("compare.csv"), &prepared.notes, &header_refs)?;
    let inst = &prepared.instance;
    for (idx, &n1) in config.budget.n1.iter().enumerate() {
        let mut row = vec![n1.to_string(), config.budget.total(n1, inst.k, inst.m).to_string()];
        for (_, cells) in &groups {
            let e = cells[idx].estimate();
            row.push(e.pcs_hat.to_string());
            row.push(e.se.to_string());
        }
        f.row(row)?;
    }
    let mut report = SuiteReport::default();
    for (name, cells) in &groups {
        let pcs: Vec<String> = cells.iter().map(|c| format!("{:.4}", c.estimate().pcs_hat)).collect();
        report.lines.push(format!("{name}: PCS {}", pcs.join(", ")));
    }
    report.files = outcome.files;
    report.files.push(f.finish()?);
    if config.output.plots {
        let plot = pcs_by_n1_plot(&outcome.cells, "PCS by procedure");
        report.files.push(write_text(&config.output.dir.join("compare.svg"), &svg::line_plot(&plot))?);
    }
    Ok(report)
}

/// Ground-truth table of a testbed instance (and the fit report when the
/// ambiguity set was fitted).
pub fn testbed(config: &ExperimentConfig, prepared: &PreparedInstance, truth_reps: u64) -> Result<SuiteReport, HarnessError> {
    let inst = &prepared.instance;
    let dir = &config.output.dir;
    let mut f = CsvFile::create(
        &dir.join("ground_truth.csv"),
        &prepared.notes,
        &["alternative", "alternative_label", "distribution", "distribution_label", "mean", "variance", "mean_se", "worst_case"],
    )?;
    for i in 0..inst.k {
        let wc = inst.worst_case_col(i);
        for j in 0..inst.m {
            f.row([
                (i + 1).to_string(),
                prepared.row_labels[i].clone(),
                (j + 1).to_string(),
                prepared.col_labels[j].clone(),
                inst.mean(i, j).to_string(),
                inst.variance(i, j).to_string(),
                (inst.variance(i, j) / truth_reps as f64).sqrt().to_string(),
                (j == wc).to_string(),
            ])?;
        }
    }
    let mut report = SuiteReport {
        files: vec![f.finish()?],
        lines: Vec::new(),
    };
    if prepared.fit.is_some() {
        report.files.push(crate::experiment::write_fit_report(&dir.join("fit_report.csv"), prepared)?);
    }
    let best = inst.true_best();
    let wc = inst.worst_case_means();
    report.lines.push(format!(
        "minimax best: alternative {} {} with worst-case mean {:.4}",
        best + 1,
        prepared.row_labels[best],
        wc[best]
    ));
    report.lines.extend(prepared.notes.iter().map(|n| format!("note: {n}")));
    Ok(report)
}
