//! Selective-prediction metrics: conditional accuracy, accuracy-rejection
//! curves, AUARC, savings tables, ideal latency, latency drag, and
//! conditional-latency profiles.
//!
//! Conditional accuracy is computed over the machine-answered set only, so
//! accuracy cannot improve merely by rejecting more. AUARC is the mean
//! conditional accuracy over a rejection grid, by default 41 evenly spaced
//! levels from 0 to 0.20.

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_ask, calibrate_ffoa, PolicyConfig};
use crate::cascade::{nr_action, realized_rates, simulate_ask, simulate_ffoa, Action, Outcome};
use crate::error::{Error, Result};
use crate::trace::Trace;

/// Which system a curve is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum System {
    Ask,
    Ffoa { utilization: f64 },
}

/// One point of an accuracy-rejection curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Target rejection level this point was calibrated for.
    pub rejection_rate: f64,
    pub realized_rejection: f64,
    pub conditional_accuracy: f64,
    pub n_answered: usize,
    /// Mean per-query latency over all outcomes, human routes included.
    pub mean_latency_seconds: f64,
    pub mean_cost_usd: f64,
}

/// Grid-averaged summary of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuarcSummary {
    pub grid: Vec<f64>,
    /// Arithmetic mean of the grid conditional accuracies.
    pub auarc: f64,
    pub mean_latency: f64,
    pub mean_cost: f64,
}

/// The default rejection grid: 0.000 to 0.200 inclusive, step 0.005.
pub fn default_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.005).collect()
}

/// Evenly spaced rejection grid. All values must land in [0, 1).
pub fn grid_from(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidParam {
            name: "grid_step",
            value: step,
            constraint: "must be positive",
        });
    }
    if !(0.0..1.0).contains(&start) || !(0.0..1.0).contains(&end) || end < start {
        return Err(Error::InvalidParam {
            name: "grid_start",
            value: start,
            constraint: "grid must satisfy 0 <= start <= end < 1",
        });
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let value = start + i as f64 * step;
        if value > end + 1e-12 {
            break;
        }
        grid.push(value.min(end));
        i += 1;
    }
    Ok(grid)
}

/// Fraction of machine-answered outcomes that were correct. Errors when no
/// outcome was machine-answered.
pub fn conditional_accuracy(outcomes: &[Outcome]) -> Result<f64> {
    let mut answered = 0usize;
    let mut correct = 0usize;
    for o in outcomes {
        if let Some(c) = o.counted_correct {
            answered += 1;
            if c {
                correct += 1;
            }
        }
    }
    if answered == 0 {
        return Err(Error::NoAnsweredOutcomes);
    }
    Ok(correct as f64 / answered as f64)
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Assemble a curve point from the outcomes simulated at a target level.
pub fn curve_point(target_rejection: f64, outcomes: &[Outcome]) -> Result<CurvePoint> {
    let rates = realized_rates(outcomes)?;
    let n = outcomes.len();
    Ok(CurvePoint {
        rejection_rate: target_rejection,
        realized_rejection: rates.rejection_rate,
        conditional_accuracy: conditional_accuracy(outcomes)?,
        n_answered: outcomes.iter().filter(|o| o.counted_correct.is_some()).count(),
        mean_latency_seconds: mean(outcomes.iter().map(|o| o.latency_seconds), n),
        mean_cost_usd: mean(outcomes.iter().map(|o| o.cost_usd), n),
    })
}

/// Calibrate and simulate the chosen system at every grid level.
pub fn accuracy_rejection_curve(
    trace: &Trace,
    system: System,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    trace.require_nonempty()?;
    grid.iter()
        .map(|&r| {
            let outcomes = match system {
                System::Ask => simulate_ask(trace, &calibrate_ask(trace, r)?)?,
                System::Ffoa { utilization } => {
                    simulate_ffoa(trace, &calibrate_ffoa(trace, utilization, r)?)?
                }
            };
            curve_point(r, &outcomes)
        })
        .collect()
}

/// Mean conditional accuracy across the curve, with grid-averaged latency
/// and cost alongside.
pub fn auarc(curve: &[CurvePoint]) -> Result<AuarcSummary> {
    if curve.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let n = curve.len();
    Ok(AuarcSummary {
        grid: curve.iter().map(|p| p.rejection_rate).collect(),
        auarc: mean(curve.iter().map(|p| p.conditional_accuracy), n),
        mean_latency: mean(curve.iter().map(|p| p.mean_latency_seconds), n),
        mean_cost: mean(curve.iter().map(|p| p.mean_cost_usd), n),
    })
}

/// System latency the fronted cascade would have if the reasoning model's
/// conditional latency matched its marginal: mean_l_nr + (1-u) * mean_l_r.
pub fn ideal_latency(u: f64, mean_l_nr: f64, mean_l_r: f64) -> Result<f64> {
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParam {
            name: "u",
            value: u,
            constraint: "utilization must lie in [0, 1]",
        });
    }
    if mean_l_nr < 0.0 || mean_l_r < 0.0 {
        return Err(Error::InvalidParam {
            name: "mean_latency",
            value: mean_l_nr.min(mean_l_r),
            constraint: "latencies must be nonnegative",
        });
    }
    Ok(mean_l_nr + (1.0 - u) * mean_l_r)
}

/// Actual vs ideal mean system latency under a config, and their gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragReport {
    pub actual: f64,
    pub ideal: f64,
    /// actual - ideal: the latency added because the reasoning model only
    /// sees the queries the non-reasoning model found difficult.
    pub drag: f64,
}

fn pass_mask(trace: &Trace, config: &PolicyConfig) -> Vec<bool> {
    trace
        .records
        .iter()
        .map(|rec| nr_action(rec.nr.p_true, config) == Action::Pass)
        .collect()
}

/// Decompose the fronted system's mean latency into the ideal part and the
/// drag caused by conditioning the reasoning model on passed queries.
///
/// Both terms are assembled from the same per-record sums, so when u = 0
/// (every query passes) the decomposition cancels exactly and drag is 0.
pub fn latency_drag(trace: &Trace, config: &PolicyConfig) -> Result<DragReport> {
    trace.require_nonempty()?;
    let n = trace.len() as f64;
    let mask = pass_mask(trace, config);
    let mut sum_nr = 0.0;
    let mut sum_r_all = 0.0;
    let mut sum_r_passed = 0.0;
    for (rec, &passed) in trace.records.iter().zip(&mask) {
        sum_nr += rec.nr.latency_seconds;
        sum_r_all += rec.r.latency_seconds;
        if passed {
            sum_r_passed += rec.r.latency_seconds;
        }
    }
    let mean_nr = sum_nr / n;
    let actual = mean_nr + sum_r_passed / n;
    let ideal = ideal_latency(config.utilization, mean_nr, sum_r_all / n)?;
    Ok(DragReport {
        actual,
        ideal,
        drag: actual - ideal,
    })
}

/// Permutation-test report for the null hypothesis of zero drag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragPermutationReport {
    pub observed_drag: f64,
    /// Mean of the drag statistic under random re-pairings of reasoning
    /// latencies with confidences.
    pub null_mean: f64,
    /// Standard deviation of the null distribution: the permutation-test
    /// standard error of the drag statistic.
    pub null_std: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Test the observed drag against the distribution obtained by shuffling
/// reasoning latencies across queries (which preserves both marginals while
/// destroying the confidence-latency dependence). Deterministic given seed.
pub fn drag_permutation_test(
    trace: &Trace,
    config: &PolicyConfig,
    n_permutations: usize,
    seed: u64,
) -> Result<DragPermutationReport> {
    if n_permutations < 2 {
        return Err(Error::InvalidParam {
            name: "n_permutations",
            value: n_permutations as f64,
            constraint: "must be at least 2",
        });
    }
    let observed = latency_drag(trace, config)?.drag;

    let n = trace.len() as f64;
    let mask = pass_mask(trace, config);
    let mut latencies: Vec<f64> = trace.records.iter().map(|j| j.r.latency_seconds).collect();
    let sum_all: f64 = latencies.iter().sum();
    let expected_pass_term = (1.0 - config.utilization) * (sum_all / n);

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut null = Vec::with_capacity(n_permutations);
    for _ in 0..n_permutations {
        latencies.shuffle(&mut rng);
        let sum_passed: f64 = latencies
            .iter()
            .zip(&mask)
            .filter_map(|(&l, &passed)| passed.then_some(l))
            .sum();
        null.push(sum_passed / n - expected_pass_term);
    }
    let null_mean = null.iter().sum::<f64>() / n_permutations as f64;
    let var = null
        .iter()
        .map(|d| (d - null_mean) * (d - null_mean))
        .sum::<f64>()
        / (n_permutations - 1) as f64;
    Ok(DragPermutationReport {
        observed_drag: observed,
        null_mean,
        null_std: var.sqrt(),
        n_permutations,
        seed,
    })
}

/// One equal-count confidence bin of the conditional-latency profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBin {
    pub bin: usize,
    /// Confidence-percentile range [low, high) covered by this bin.
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub mean_r_latency_seconds: f64,
    pub count: usize,
}

/// Mean reasoning latency per confidence-rank bin: queries are ranked by
/// nr confidence and split into n_bins equal-count bins (sizes differ by at
/// most one). A falling profile is the signature of latency drag.
pub fn conditional_latency_profile(trace: &Trace, n_bins: usize) -> Result<Vec<LatencyBin>> {
    if n_bins < 2 {
        return Err(Error::InvalidParam {
            name: "bins",
            value: n_bins as f64,
            constraint: "must be at least 2",
        });
    }
    let n = trace.len();
    if n < n_bins {
        return Err(Error::TraceSmallerThanBins { n, bins: n_bins });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        trace.records[a]
            .nr
            .p_true
            .total_cmp(&trace.records[b].nr.p_true)
    });
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let start = b * n / n_bins;
        let end = (b + 1) * n / n_bins;
        let count = end - start;
        let sum: f64 = order[start..end]
            .iter()
            .map(|&i| trace.records[i].r.latency_seconds)
            .sum();
        bins.push(LatencyBin {
            bin: b,
            percentile_low: start as f64 / n as f64,
            percentile_high: end as f64 / n as f64,
            mean_r_latency_seconds: sum / count as f64,
            count,
        });
    }
    Ok(bins)
}

/// Per-arm marginal statistics of a joined trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub error_rate: f64,
    pub mean_latency_seconds: f64,
    pub mean_cost_usd: f64,
    pub mean_output_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub nr: ArmStats,
    pub r: ArmStats,
}

/// Marginal error rates, latencies, costs, and token counts per arm.
pub fn baseline_stats(trace: &Trace) -> Result<BaselineStats> {
    trace.require_nonempty()?;
    let n = trace.len();
    let arm = |correct: Vec<bool>, lat: Vec<f64>, cost: Vec<f64>, tokens: Vec<u64>| ArmStats {
        error_rate: correct.iter().filter(|&&c| !c).count() as f64 / n as f64,
        mean_latency_seconds: mean(lat.into_iter(), n),
        mean_cost_usd: mean(cost.into_iter(), n),
        mean_output_tokens: mean(tokens.into_iter().map(|t| t as f64), n),
    };
    let recs = &trace.records;
    Ok(BaselineStats {
        nr: arm(
            recs.iter().map(|j| j.nr.correct).collect(),
            recs.iter().map(|j| j.nr.latency_seconds).collect(),
            recs.iter().map(|j| j.nr.cost_usd).collect(),
            recs.iter().map(|j| j.nr.output_tokens).collect(),
        ),
        r: arm(
            recs.iter().map(|j| j.r.correct).collect(),
            recs.iter().map(|j| j.r.latency_seconds).collect(),
            recs.iter().map(|j| j.r.cost_usd).collect(),
            recs.iter().map(|j| j.r.output_tokens).collect(),
        ),
    })
}

/// One row of the utilization savings table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub utilization: f64,
    pub auarc: f64,
    /// Percentage change versus the u = 0 row; 0 for the base row itself.
    pub delta_auarc_pct: f64,
    pub delta_latency_pct: f64,
    pub delta_cost_pct: f64,
}

fn pct_change(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (value - base) / base * 100.0
    }
}

/// AUARC plus grid-averaged latency and cost changes for each utilization,
/// relative to the u = 0 system. The base row is always included first.
pub fn savings_table(trace: &Trace, u_values: &[f64], grid: &[f64]) -> Result<Vec<SavingsRow>> {
    let base = auarc(&accuracy_rejection_curve(
        trace,
        System::Ffoa { utilization: 0.0 },
        grid,
    )?)?;
    let mut rows = vec![SavingsRow {
        utilization: 0.0,
        auarc: base.auarc,
        delta_auarc_pct: pct_change(base.auarc, base.auarc),
        delta_latency_pct: pct_change(base.mean_latency, base.mean_latency),
        delta_cost_pct: pct_change(base.mean_cost, base.mean_cost),
    }];
    for &u in u_values {
        if u == 0.0 {
            continue;
        }
        let summary = auarc(&accuracy_rejection_curve(
            trace,
            System::Ffoa { utilization: u },
            grid,
        )?)?;
        rows.push(SavingsRow {
            utilization: u,
            auarc: summary.auarc,
            delta_auarc_pct: pct_change(summary.auarc, base.auarc),
            delta_latency_pct: pct_change(summary.mean_latency, base.mean_latency),
            delta_cost_pct: pct_change(summary.mean_cost, base.mean_cost),
        });
    }
    Ok(rows)
}
