//! Last-exit-time oracles, closed-form probability bounds for AA and GAA,
//! and allocation-pattern metrics.
//!
//! For a boundary `b`, the upper last exit time of a sample-mean path is the
//! last sample size at which the running mean is still `>= b` (0 if never),
//! and the lower last exit time is the last one at which it is `<= b`. The
//! suprema run over an infinite horizon, so the oracles truncate at a horizon
//! `H` chosen from the exponential tail bound `Pr{U > H} <= 2 exp(-H g^2 / 2)`
//! with `g` the standardized gap between boundary and true mean.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{ModelError, ProblemInstance, Provenance, ScenarioId, ScenarioStats};
use crate::procedures::{run_aa_on, ProcedureError, RunRecord};
use crate::streams::{open_stream, ScenarioStream, StreamError, StreamSet, StreamSpec};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("boundary {b} must lie strictly between the best worst-case mean {low} and the runner-up {high}")]
    Boundary { b: f64, low: f64, high: f64 },
    #[error("boundary gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("budget {budget} is below k * m = {cells}")]
    BudgetTooSmall { budget: u64, cells: u64 },
    #[error("hypothesis fails: no scenario other than the worst case of alternative {0} lies above the boundary")]
    Inapplicable(usize),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Procedure(#[from] ProcedureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LastExitResult {
    pub value: u64,
    pub resolved: bool,
    pub horizon: u64,
}

/// Largest `n` (1-based) with `prefix[n - 1] >= b`, or 0.
pub fn last_exit_upper(prefix: &[f64], b: f64) -> u64 {
    prefix.iter().rposition(|&x| x >= b).map_or(0, |p| p as u64 + 1)
}

/// Largest `n` (1-based) with `prefix[n - 1] <= b`, or 0.
pub fn last_exit_lower(prefix: &[f64], b: f64) -> u64 {
    prefix.iter().rposition(|&x| x <= b).map_or(0, |p| p as u64 + 1)
}

/// `2 exp(-n b^2 / 2)`, the tail bound on `Pr{U(b) > n}` for a standard
/// normal mean path, clamped to 1.
pub fn tail_bound(n: u64, b: f64) -> Result<f64, AnalysisError> {
    if !(b > 0.0) {
        return Err(AnalysisError::NonPositiveGap(b));
    }
    if n == 0 {
        return Err(AnalysisError::ZeroSampleSize);
    }
    Ok((2.0 * (-(n as f64) * b * b / 2.0).exp()).min(1.0))
}

/// `1 - exp(-b^2 / 2)`, a lower bound on `Pr{U(b) = 0}`.
pub fn zero_exit_bound(b: f64) -> Result<f64, AnalysisError> {
    if !(b > 0.0) {
        return Err(AnalysisError::NonPositiveGap(b));
    }
    Ok(1.0 - (-b * b / 2.0).exp())
}

/// Picks truncation horizons so the neglected tail stays below `tolerance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationGuard {
    pub tolerance: f64,
    pub max_horizon: u64,
}

impl Default for TruncationGuard {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_horizon: 50_000_000,
        }
    }
}

impl TruncationGuard {
    /// Tail mass beyond `horizon` for standardized gap `gap`.
    pub fn residual(&self, horizon: u64, gap: f64) -> f64 {
        2.0 * (-(horizon as f64) * gap * gap / 2.0).exp()
    }

    /// Smallest horizon whose residual is below the tolerance, capped.
    pub fn horizon_for(&self, gap: f64) -> u64 {
        let h = (2.0 * (2.0 / self.tolerance).ln() / (gap * gap)).ceil() + 1.0;
        if h.is_finite() {
            (h as u64).clamp(1, self.max_horizon)
        } else {
            self.max_horizon
        }
    }

    /// Last exit of `stream` from `b`, scanning `horizon` observations.
    ///
    /// `upper` selects the upper exit time (true mean below `b`). The result is
    /// resolved when the residual is below tolerance and the running mean at
    /// the horizon is on the true-mean side of `b`.
    pub fn scan(
        &self,
        stream: &mut ScenarioStream,
        b: f64,
        gap: f64,
        upper: bool,
    ) -> Result<LastExitResult, StreamError> {
        let horizon = self.horizon_for(gap);
        let mut stats = ScenarioStats::default();
        let mut value = 0;
        for n in 1..=horizon {
            stats
                .record(stream.next()?, Provenance::Init)
                .expect("stream produced a non-finite observation");
            let beyond = if upper { stats.mean >= b } else { stats.mean <= b };
            if beyond {
                value = n;
            }
        }
        let resolved = self.residual(horizon, gap) < self.tolerance && value < horizon;
        Ok(LastExitResult {
            value,
            resolved,
            horizon,
        })
    }
}

fn check_boundary(instance: &ProblemInstance, b: f64) -> Result<usize, AnalysisError> {
    let best = instance.true_best();
    let wc = instance.worst_case_means();
    let low = wc[best];
    let high = wc
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &w)| w)
        .fold(f64::INFINITY, f64::min);
    if !(b > low && b < high) {
        return Err(AnalysisError::Boundary { b, low, high });
    }
    Ok(best)
}

/// `S(b)` on one replication: the sum over non-best alternatives of the
/// smallest lower exit time among their scenarios above `b`, plus the upper
/// exit times of every scenario of the best alternative.
#[derive(Clone, Debug, PartialEq)]
pub struct SBound {
    pub value: u64,
    pub resolved: bool,
    pub components: Vec<(ScenarioId, LastExitResult)>,
}

pub fn s_bound(
    instance: &ProblemInstance,
    b: f64,
    spec: &StreamSpec,
    guard: &TruncationGuard,
) -> Result<SBound, AnalysisError> {
    let best = check_boundary(instance, b)?;
    let mut value = 0u64;
    let mut resolved = true;
    let mut components = Vec::new();
    for i in 0..instance.k {
        let mut row_min: Option<u64> = None;
        for j in 0..instance.m {
            let mu = instance.mean(i, j);
            let upper = i == best;
            // non-best scenarios at or below b have infinite lower exit times
            if !upper && mu <= b {
                continue;
            }
            let gap = (b - mu).abs() / instance.sd(i, j);
            let id = ScenarioId::from_zero_based(i, j);
            let horizon = guard.horizon_for(gap);
            let mut stream = open_stream(instance, id, &spec.with_horizon(horizon))?;
            let exit = guard.scan(&mut stream, b, gap, upper)?;
            resolved &= exit.resolved;
            components.push((id, exit));
            if upper {
                value += exit.value;
            } else {
                row_min = Some(row_min.map_or(exit.value, |v| v.min(exit.value)));
            }
        }
        if i != best {
            value += row_min.expect("boundary check guarantees a scenario above b");
        }
    }
    Ok(SBound {
        value,
        resolved,
        components,
    })
}

/// Outcome of the pathwise k-step inequality on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct PathwiseCheck {
    pub replication: u64,
    pub s_value: u64,
    pub resolved: bool,
    /// Largest k-step count of the true best seen over all rounds.
    pub best_k_steps: u64,
    pub holds: bool,
    pub record: RunRecord,
}

/// Runs AA and the `S(b)` oracle on the same streams of replication `replication`.
pub fn pathwise_k_step_check(
    instance: &ProblemInstance,
    budget: u64,
    b: f64,
    master_seed: u64,
    replication: u64,
    guard: &TruncationGuard,
) -> Result<PathwiseCheck, AnalysisError> {
    let spec = StreamSpec::new(master_seed, replication, budget);
    let s = s_bound(instance, b, &spec, guard)?;
    let truth = instance.true_best();
    let mut streams = StreamSet::open(instance, &spec)?;
    let mut peak = 0;
    let record = run_aa_on(instance.k, instance.m, budget, &mut streams, truth, |state| {
        peak = peak.max(state.r_k[truth]);
    })?;
    Ok(PathwiseCheck {
        replication,
        s_value: s.value,
        resolved: s.resolved,
        best_k_steps: peak,
        holds: peak <= s.value,
        record,
    })
}

/// A Monte Carlo proportion with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// `sqrt(p (1 - p) / R)`.
    pub fn se(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.estimate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Monte Carlo estimate of `Pr{floor((N - mk) / (m + k - 1)) > 2 S(b)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcsLowerBound {
    pub proportion: Proportion,
    /// Replications whose `S(b)` was unresolved; excluded from the estimate.
    pub unresolved: u64,
}

pub fn pcs_lower_bound_mc(
    instance: &ProblemInstance,
    budget: u64,
    b: f64,
    reps: u64,
    master_seed: u64,
    guard: &TruncationGuard,
) -> Result<PcsLowerBound, AnalysisError> {
    let mut curve = pcs_lower_bound_curve(instance, &[budget], b, reps, master_seed, guard)?;
    Ok(curve.remove(0))
}

/// [`pcs_lower_bound_mc`] at several budgets from one set of `S(b)` draws.
pub fn pcs_lower_bound_curve(
    instance: &ProblemInstance,
    budgets: &[u64],
    b: f64,
    reps: u64,
    master_seed: u64,
    guard: &TruncationGuard,
) -> Result<Vec<PcsLowerBound>, AnalysisError> {
    let cells = instance.cells() as u64;
    if let Some(&budget) = budgets.iter().find(|&&n| n < cells) {
        return Err(AnalysisError::BudgetTooSmall { budget, cells });
    }
    check_boundary(instance, b)?;
    let draws = (0..reps)
        .into_par_iter()
        .map(|r| s_bound(instance, b, &StreamSpec::new(master_seed, r, 1), guard))
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let resolved: Vec<u64> = draws.iter().filter(|s| s.resolved).map(|s| s.value).collect();
    let span = (instance.k + instance.m - 1) as u64;
    Ok(budgets
        .iter()
        .map(|&budget| {
            let rounds = (budget - cells) / span;
            PcsLowerBound {
                proportion: Proportion {
                    successes: resolved.iter().filter(|&&s| rounds > 2 * s).count() as u64,
                    trials: resolved.len() as u64,
                },
                unresolved: reps - resolved.len() as u64,
            }
        })
        .collect())
}

/// Empirical tail of the upper exit time `U(b)` of standard normal mean paths.
#[derive(Clone, Debug, PartialEq)]
pub struct ExitTailEstimate {
    pub b: f64,
    /// `(n, Pr{U(b) > n})` for each requested `n`.
    pub exceed: Vec<(u64, Proportion)>,
    pub zero: Proportion,
    pub unresolved: u64,
}

/// Scans `reps` standard normal paths (replication `r` uses the streams of
/// replication `r` under `master_seed`) and tallies `U(b) > n` and `U(b) = 0`
/// over the resolved ones.
pub fn exit_time_tail_mc(
    b: f64,
    sizes: &[u64],
    reps: u64,
    master_seed: u64,
    guard: &TruncationGuard,
) -> Result<ExitTailEstimate, AnalysisError> {
    if !(b > 0.0) {
        return Err(AnalysisError::NonPositiveGap(b));
    }
    if sizes.contains(&0) {
        return Err(AnalysisError::ZeroSampleSize);
    }
    // scenario (1,1) of this instance is a standard normal stream
    let unit = ProblemInstance::new(2, 1, vec![0.0, 1.0], vec![1.0, 1.0], crate::model::Backend::Gaussian)?;
    let horizon = guard.horizon_for(b);
    let exits = (0..reps)
        .into_par_iter()
        .map(|r| {
            let spec = StreamSpec::new(master_seed, r, horizon);
            let mut stream = open_stream(&unit, ScenarioId::new(1, 1), &spec)?;
            Ok(guard.scan(&mut stream, b, b, true)?)
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let resolved: Vec<u64> = exits.iter().filter(|e| e.resolved).map(|e| e.value).collect();
    let trials = resolved.len() as u64;
    let count = |pred: &dyn Fn(u64) -> bool| resolved.iter().filter(|&&u| pred(u)).count() as u64;
    Ok(ExitTailEstimate {
        b,
        exceed: sizes
            .iter()
            .map(|&n| {
                let p = Proportion {
                    successes: count(&|u| u > n),
                    trials,
                };
                (n, p)
            })
            .collect(),
        zero: Proportion {
            successes: count(&|u| u == 0),
            trials,
        },
        unresolved: reps - trials,
    })
}

/// Which exponent denominators the PICS bound uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PicsBoundForm {
    /// `(mu - b)^2 / (2 sigma^2)`, as obtained from the tail bound.
    #[default]
    Derived,
    /// `(mu - b)^2 / sigma^2`.
    Compact,
}

/// Additive exponential upper bound on the PICS of AA at budget `budget`,
/// with `r = floor((N - mk) / (2 (m + k - 1)^2))`, clamped to `[0, 1]`.
pub fn pics_upper_bound(
    instance: &ProblemInstance,
    budget: u64,
    b: f64,
    form: PicsBoundForm,
) -> Result<f64, AnalysisError> {
    let cells = instance.cells() as u64;
    if budget < cells {
        return Err(AnalysisError::BudgetTooSmall { budget, cells });
    }
    let best = check_boundary(instance, b)?;
    let span = (instance.k + instance.m - 1) as u64;
    let r = ((budget - cells) / (2 * span * span)) as f64;
    let scale = match form {
        PicsBoundForm::Derived => 2.0,
        PicsBoundForm::Compact => 1.0,
    };
    let mut total = 0.0;
    for i in 0..instance.k {
        if i == best {
            for j in 0..instance.m {
                let d = b - instance.mean(i, j);
                total += 2.0 * (-r * d * d / (scale * instance.variance(i, j))).exp();
            }
        } else {
            let mut count = 0;
            let mut exponent = 0.0;
            for j in 0..instance.m {
                let d = instance.mean(i, j) - b;
                if d > 0.0 {
                    count += 1;
                    exponent += d * d / (scale * instance.variance(i, j));
                }
            }
            total += 2f64.powi(count) * (-r * exponent).exp();
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Lower bound on the probability that alternative `i`'s worst-case scenario
/// is sampled only finitely often, or `Inapplicable` when no other scenario
/// of `i` lies above `b`.
///
/// `n0` is the initial sample size (1 for AA).
pub fn worst_case_miss_bound(
    instance: &ProblemInstance,
    b: f64,
    i: usize,
    n0: u32,
) -> Result<f64, AnalysisError> {
    let best = check_boundary(instance, b)?;
    let wc = instance.worst_case_col(i);
    let a = Normal::standard()
        .cdf((n0 as f64).sqrt() * (b - instance.mean(i, wc)) / instance.sd(i, wc));
    let exit_free = |row: usize, col: usize| {
        let d = b - instance.mean(row, col);
        1.0 - (-d * d / (2.0 * instance.variance(row, col))).exp()
    };
    let mut above = 0;
    let mut sum = 0.0;
    for j in (0..instance.m).filter(|&j| j != wc) {
        if instance.mean(i, j) > b {
            above += 1;
            sum += exit_free(i, j);
        }
    }
    if above == 0 {
        return Err(AnalysisError::Inapplicable(i + 1));
    }
    let best_stays: f64 = (0..instance.m).map(|j| exit_free(best, j)).product();
    Ok(a * sum * best_stays)
}

/// Sum of [`worst_case_miss_bound`] over non-best alternatives whose
/// hypothesis holds, clamped to 1; `Inapplicable` if it holds for none.
pub fn worst_case_miss_bound_total(instance: &ProblemInstance, b: f64, n0: u32) -> Result<f64, AnalysisError> {
    let best = check_boundary(instance, b)?;
    let mut total = 0.0;
    let mut any = false;
    for i in (0..instance.k).filter(|&i| i != best) {
        match worst_case_miss_bound(instance, b, i, n0) {
            Ok(v) => {
                total += v;
                any = true;
            }
            Err(AnalysisError::Inapplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if !any {
        return Err(AnalysisError::Inapplicable(0));
    }
    Ok(total.min(1.0))
}

/// Where a finished run concentrated its samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPattern {
    /// Row-major share of the total sample size.
    pub shares: Vec<f64>,
    /// Row-major: share above `theta / (k m)`.
    pub heavy: Vec<bool>,
    pub heavy_count: usize,
    /// Per alternative: its most-sampled scenario (ties to lowest index) is
    /// the designated worst-case column.
    pub worst_case_most_sampled: Vec<bool>,
}

/// Allocation pattern with worst-case columns given per alternative (0-based).
pub fn allocation_pattern_with(
    record: &RunRecord,
    theta: f64,
    worst_case_cols: &[usize],
) -> Result<AllocationPattern, AnalysisError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(AnalysisError::Threshold(theta));
    }
    let (k, m) = (record.k, record.m);
    let total: u64 = record.sample_sizes.iter().sum();
    let shares: Vec<f64> = record
        .sample_sizes
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect();
    let cut = theta / (k * m) as f64;
    let heavy: Vec<bool> = shares.iter().map(|&s| s > cut).collect();
    let worst_case_most_sampled = (0..k)
        .map(|i| {
            let row = &record.sample_sizes[i * m..(i + 1) * m];
            let top = row.iter().enumerate().fold(0, |b, (j, &n)| if n > row[b] { j } else { b });
            top == worst_case_cols[i]
        })
        .collect();
    Ok(AllocationPattern {
        heavy_count: heavy.iter().filter(|&&h| h).count(),
        shares,
        heavy,
        worst_case_most_sampled,
    })
}

/// Allocation pattern under canonical ordering (worst case in column 1).
pub fn allocation_pattern(record: &RunRecord, theta: f64) -> Result<AllocationPattern, AnalysisError> {
    allocation_pattern_with(record, theta, &vec![0; record.k])
}

/// Least-squares slope of `ln y` against `x`, over points with `y > 0`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mm_config, sc_config, Backend};

    #[test]
    fn last_exit_examples() {
        assert_eq!(last_exit_upper(&[1.0, 0.5, 0.0], 0.4), 2);
        assert_eq!(last_exit_upper(&[0.1, 0.2], 0.4), 0);
        assert_eq!(last_exit_lower(&[-1.0, -0.5, 0.0], -0.4), 2);
        assert_eq!(last_exit_lower(&[1.0, 2.0], 0.5), 0);
    }

    #[test]
    fn tail_bound_examples() {
        assert!((tail_bound(1, 2.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!(tail_bound(1, 50.0).unwrap() < 1e-300);
        assert!(zero_exit_bound(50.0).unwrap() > 1.0 - 1e-12);
        assert!(tail_bound(1, 0.0).is_err());
        assert!(zero_exit_bound(-1.0).is_err());
        assert_eq!(tail_bound(1, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn guard_horizon_meets_tolerance() {
        let g = TruncationGuard::default();
        for gap in [0.05, 0.1, 0.5, 2.0] {
            let h = g.horizon_for(gap);
            assert!(g.residual(h, gap) < g.tolerance);
            assert!(g.residual(h - 2, gap) >= g.tolerance * 0.5);
        }
    }

    fn constant_instance() -> ProblemInstance {
        ProblemInstance::new(2, 1, vec![0.0, 1.0], vec![1.0, 1.0], Backend::Gaussian).unwrap()
    }

    #[test]
    fn scan_of_constant_stream_is_zero() {
        let g = TruncationGuard::default();
        let mut s = ScenarioStream::fixed(ScenarioId::new(1, 1), vec![0.0; g.horizon_for(0.5) as usize]);
        let r = g.scan(&mut s, 0.5, 0.5, true).unwrap();
        assert_eq!(r.value, 0);
        assert!(r.resolved);
    }

    #[test]
    fn scan_counts_hand_placed_crossing() {
        let g = TruncationGuard::default();
        let h = g.horizon_for(0.5) as usize;
        // means: 3, 1.5, 1, 0.75, then decaying below 0.5 after n = 6
        let mut values = vec![0.0; h];
        values[0] = 3.0;
        let mut s = ScenarioStream::fixed(ScenarioId::new(1, 1), values);
        let r = g.scan(&mut s, 0.5, 0.5, true).unwrap();
        assert_eq!(r.value, 6);
        let mut values = vec![1.0; h];
        values[0] = -2.0;
        // lower exit from 0.5 for a path centered at 1: means -2, -0.5, 0, 0.25, 0.4, 0.5, 0.571
        let mut s = ScenarioStream::fixed(ScenarioId::new(2, 1), values);
        assert_eq!(g.scan(&mut s, 0.5, 0.5, false).unwrap().value, 6);
    }

    #[test]
    fn exit_tail_mc_respects_its_bounds() {
        let g = TruncationGuard::default();
        let est = exit_time_tail_mc(1.0, &[1, 5], 4000, 9, &g).unwrap();
        assert_eq!(est.unresolved, 0);
        for &(n, p) in &est.exceed {
            assert!(p.estimate() <= tail_bound(n, 1.0).unwrap() + 3.0 * p.se());
        }
        assert!(est.zero.estimate() >= zero_exit_bound(1.0).unwrap() - 3.0 * est.zero.se());
        assert!(exit_time_tail_mc(0.0, &[1], 1, 0, &g).is_err());
    }

    #[test]
    fn s_bound_rejects_bad_boundary() {
        let inst = constant_instance();
        let spec = StreamSpec::new(1, 0, 1);
        let g = TruncationGuard::default();
        assert!(matches!(s_bound(&inst, 1.5, &spec, &g), Err(AnalysisError::Boundary { .. })));
        assert!(matches!(s_bound(&inst, 0.0, &spec, &g), Err(AnalysisError::Boundary { .. })));
        assert!(s_bound(&inst, 0.5, &spec, &g).is_ok());
    }

    #[test]
    fn pathwise_inequality_holds_on_a_few_replications() {
        let inst = sc_config(3, 2, 0.5, 25.0).unwrap();
        let g = TruncationGuard::default();
        for rep in 0..5 {
            let c = pathwise_k_step_check(&inst, 2000, 0.25, 3, rep, &g).unwrap();
            if c.resolved {
                assert!(c.holds, "{c:?}");
            }
        }
    }

    #[test]
    fn pics_bound_at_r_one_matches_hand_arithmetic() {
        let inst = sc_config(2, 2, 0.5, 25.0).unwrap();
        // N = mk + 2 (m + k - 1)^2 = 4 + 18
        let v = pics_upper_bound(&inst, 22, 0.25, PicsBoundForm::Derived).unwrap();
        let term = (-(0.25f64 * 0.25) / 50.0).exp();
        let expected = (4.0 * (-2.0 * 0.0625 / 50.0f64).exp() + 2.0 * term + 2.0 * term).min(1.0);
        assert_eq!(v, expected);
        // r = 0 is vacuous
        assert_eq!(pics_upper_bound(&inst, 21, 0.25, PicsBoundForm::Derived).unwrap(), 1.0);
    }

    #[test]
    fn pics_bound_is_nonincreasing_in_budget() {
        let inst = sc_config(5, 3, 0.5, 25.0).unwrap();
        let mut last = 1.0;
        for n in (15..2_000_000).step_by(10_000) {
            let v = pics_upper_bound(&inst, n, 0.25, PicsBoundForm::Derived).unwrap();
            let c = pics_upper_bound(&inst, n, 0.25, PicsBoundForm::Compact).unwrap();
            assert!(v <= last && (0.0..=1.0).contains(&v));
            assert!(c <= v);
            last = v;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn miss_bound_hand_value() {
        // k = 2, m = 2, sigma = 1
        let inst = ProblemInstance::new(2, 2, vec![0.0, -1.0, 2.0, 1.5], vec![1.0; 4], Backend::Gaussian)
            .unwrap();
        let b = 1.0;
        let v = worst_case_miss_bound(&inst, b, 1, 1).unwrap();
        let a = Normal::standard().cdf(b - 2.0);
        let b22 = 1.0 - (-0.25f64 / 2.0).exp();
        let b11 = 1.0 - (-1.0f64 / 2.0).exp();
        let b12 = 1.0 - (-4.0f64 / 2.0).exp();
        assert!((v - a * b22 * b11 * b12).abs() < 1e-12);
        assert!(v > 0.0 && v < 1.0);
        let n0 = worst_case_miss_bound(&inst, b, 1, 20).unwrap();
        assert!(n0 < v);
    }

    #[test]
    fn miss_bound_inapplicable_when_only_worst_case_is_above() {
        let inst = mm_config(3, 2, 25.0).unwrap();
        // b = 0.25: row 2 is (0.3, 0.2), only the worst case exceeds b
        assert_eq!(
            worst_case_miss_bound(&inst, 0.25, 1, 1),
            Err(AnalysisError::Inapplicable(2))
        );
        assert!(worst_case_miss_bound(&inst, 0.15, 1, 1).unwrap() > 0.0);
    }

    fn record(k: usize, m: usize, sizes: Vec<u64>) -> RunRecord {
        RunRecord {
            k,
            m,
            selection: 1,
            means: vec![0.0; sizes.len()],
            consumed: sizes.iter().sum(),
            sample_sizes: sizes,
            per_round_best: vec![],
            r_m: vec![0; k],
            r_k: vec![0; k],
            rounds: 0,
            budget: 0,
            correct: true,
        }
    }

    #[test]
    fn allocation_pattern_examples() {
        let uniform = record(2, 2, vec![5; 4]);
        let p = allocation_pattern(&uniform, 0.05).unwrap();
        assert_eq!(p.heavy_count, 4);
        assert!((p.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let skew = record(2, 2, vec![1000, 1000, 1, 998]);
        let p = allocation_pattern(&skew, 0.05).unwrap();
        assert_eq!(p.heavy_count, 3);
        assert_eq!(p.worst_case_most_sampled, vec![true, false]);
        assert!(allocation_pattern(&skew, 1.5).is_err());
    }

    #[test]
    fn log_slope_of_exponential() {
        let xs = [1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| (-0.5 * x).exp()).collect();
        assert!((log_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
    }
}
