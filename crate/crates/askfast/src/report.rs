//! Full evaluation pipeline: baseline stats, accuracy-rejection curves over
//! a utilization sweep, AUARC, the savings table, latency-drag analysis,
//! the conditional-latency profile, and the token-length correctness
//! diagnostic, written as one JSON report plus plot-ready CSVs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::calibrate_ffoa;
use crate::cascade::Outcome;
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy_rejection_curve, auarc, baseline_stats, conditional_latency_profile, default_grid,
    drag_permutation_test, latency_drag, savings_table, AuarcSummary, BaselineStats, CurvePoint,
    DragPermutationReport, DragReport, LatencyBin, SavingsRow, System,
};
use crate::smooth::{default_eval_points, loess_fit, LoessFit};
use crate::trace::Trace;

/// Utilization sweep used by default: the pure token-threshold system plus
/// fronting at 30%, 50%, 60%, and 75%.
pub fn default_u_values() -> Vec<f64> {
    vec![0.3, 0.5, 0.6, 0.75]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub u_values: Vec<f64>,
    pub grid: Vec<f64>,
    /// Rejection target used for the drag analysis rows.
    pub drag_rejection: f64,
    pub profile_bins: usize,
    pub loess_span: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            u_values: default_u_values(),
            grid: default_grid(),
            drag_rejection: 0.1,
            profile_bins: 10,
            loess_span: crate::smooth::DEFAULT_SPAN,
            permutations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceInfo {
    pub n_records: usize,
    pub nr_model_id: String,
    pub r_model_id: String,
    pub source: String,
}

/// AUARC summary for one system in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// None for the Ask system, Some(u) for the fronted system.
    pub utilization: Option<f64>,
    pub summary: AuarcSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragRow {
    pub utilization: f64,
    pub report: DragReport,
    pub permutation: DragPermutationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trace: TraceInfo,
    pub baseline: BaselineStats,
    pub sweep: Vec<SweepEntry>,
    pub savings: Vec<SavingsRow>,
    pub drag: Vec<DragRow>,
}

/// Everything the report computes, including the per-system curves that
/// back the CSV artifacts.
pub struct ReportBundle {
    pub report: Report,
    pub ask_curve: Vec<CurvePoint>,
    /// Curves for u = 0 plus each requested utilization, in order.
    pub ffoa_curves: Vec<(f64, Vec<CurvePoint>)>,
    pub profile: Vec<LatencyBin>,
    pub loess: LoessFit,
}

/// Run the full pipeline on a joined trace.
pub fn build_report(trace: &Trace, options: &ReportOptions) -> Result<ReportBundle> {
    trace.require_nonempty()?;

    let ask_curve = accuracy_rejection_curve(trace, System::Ask, &options.grid)?;
    let mut sweep = vec![SweepEntry {
        utilization: None,
        summary: auarc(&ask_curve)?,
    }];

    let mut sweep_u = vec![0.0];
    sweep_u.extend(options.u_values.iter().copied().filter(|&u| u != 0.0));
    let mut ffoa_curves = Vec::with_capacity(sweep_u.len());
    for &u in &sweep_u {
        let curve = accuracy_rejection_curve(trace, System::Ffoa { utilization: u }, &options.grid)?;
        sweep.push(SweepEntry {
            utilization: Some(u),
            summary: auarc(&curve)?,
        });
        ffoa_curves.push((u, curve));
    }

    let savings = savings_table(trace, &options.u_values, &options.grid)?;

    let mut drag = Vec::new();
    for &u in &sweep_u {
        let config = calibrate_ffoa(trace, u, options.drag_rejection)?;
        drag.push(DragRow {
            utilization: u,
            report: latency_drag(trace, &config)?,
            permutation: drag_permutation_test(trace, &config, options.permutations, options.seed)?,
        });
    }

    let profile = conditional_latency_profile(trace, options.profile_bins)?;

    let x: Vec<f64> = trace
        .records
        .iter()
        .map(|j| j.r.output_tokens as f64)
        .collect();
    let y: Vec<f64> = trace
        .records
        .iter()
        .map(|j| f64::from(u8::from(j.r.correct)))
        .collect();
    let eval_points = default_eval_points(&x);
    let loess = loess_fit(&x, &y, options.loess_span, &eval_points)?;

    Ok(ReportBundle {
        report: Report {
            trace: TraceInfo {
                n_records: trace.len(),
                nr_model_id: trace.metadata.nr_model_id.clone(),
                r_model_id: trace.metadata.r_model_id.clone(),
                source: trace.metadata.source.clone(),
            },
            baseline: baseline_stats(trace)?,
            sweep,
            savings,
            drag,
        },
        ask_curve,
        ffoa_curves,
        profile,
        loess,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write pretty JSON with a trailing newline.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Write an accuracy-rejection curve as plot-ready CSV.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for point in curve {
        writer.serialize(point).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Write routed outcomes as CSV (query_id, route, counted_correct,
/// latency_seconds, cost_usd).
pub fn write_outcomes_csv(path: &Path, outcomes: &[Outcome]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for outcome in outcomes {
        writer.serialize(outcome).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Write the conditional-latency profile as CSV.
pub fn write_profile_csv(path: &Path, bins: &[LatencyBin]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for bin in bins {
        writer.serialize(bin).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize)]
struct LoessRow {
    eval_point: f64,
    fitted_mean: f64,
    lower: f64,
    upper: f64,
}

/// Write a fitted curve with its band as CSV: eval_point, fitted_mean,
/// lower (mean - sigma), upper (mean + sigma). `clamp` limits all three to
/// [0, 1] for plotting probabilities.
pub fn write_loess_csv(path: &Path, fit: &LoessFit, clamp: bool) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for i in 0..fit.eval_points.len() {
        let mut row = LoessRow {
            eval_point: fit.eval_points[i],
            fitted_mean: fit.fitted_mean[i],
            lower: fit.fitted_mean[i] - fit.sigma_band[i],
            upper: fit.fitted_mean[i] + fit.sigma_band[i],
        };
        if clamp {
            row.fitted_mean = row.fitted_mean.clamp(0.0, 1.0);
            row.lower = row.lower.clamp(0.0, 1.0);
            row.upper = row.upper.clamp(0.0, 1.0);
        }
        writer.serialize(&row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Config(format!("csv write to {} failed: {e}", path.display()))
}

/// Build the report and write every artifact under `out_dir`. Returns the
/// written paths in a fixed order.
pub fn write_report(trace: &Trace, options: &ReportOptions, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let bundle = build_report(trace, options)?;

    let mut written = Vec::new();
    let report_path = out_dir.join("report.json");
    write_json_pretty(&report_path, &bundle.report)?;
    written.push(report_path);

    let ask_path = out_dir.join("curve_ask.csv");
    write_curve_csv(&ask_path, &bundle.ask_curve)?;
    written.push(ask_path);

    for (u, curve) in &bundle.ffoa_curves {
        let path = out_dir.join(format!("curve_ffoa_u{:.2}.csv", u));
        write_curve_csv(&path, curve)?;
        written.push(path);
    }

    let profile_path = out_dir.join("profile.csv");
    write_profile_csv(&profile_path, &bundle.profile)?;
    written.push(profile_path);

    let loess_path = out_dir.join("loess.csv");
    write_loess_csv(&loess_path, &bundle.loess, false)?;
    written.push(loess_path);

    Ok(written)
}
