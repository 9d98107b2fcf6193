//! Subcommand dispatcher for the `askfast` binary: validate, join,
//! calibrate, simulate, curve, auarc, drag, loess, synth, collect, report.
//!
//! Success exits 0 with the declared artifacts on disk and a compact JSON
//! summary on stdout. Failures exit 1 with a single-line machine-readable
//! error JSON on stderr naming the offending parameter when there is one.
//! Unknown subcommands and malformed flags exit 2 with usage.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::calibrate::{calibrate_ask, calibrate_ffoa};
use crate::cascade::{realized_rates, simulate_ask, simulate_ffoa};
use crate::collector::{self, CollectOptions, EndpointConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy_rejection_curve, auarc, drag_permutation_test, grid_from, latency_drag, System,
};
use crate::report::{write_report, ReportOptions};
use crate::smooth::loess_fit;
use crate::synth::{generate, paper_preset, split_records, SynthSpec};
use crate::trace::{
    ingest, join, load_trace_dir, write_jsonl, ModelRole, Trace, NR_TRACE_FILE, R_TRACE_FILE,
};

#[derive(Parser)]
#[command(
    name = "askfast",
    version,
    about = "Calibrate, simulate, and evaluate human-in-the-loop LLM cascades from per-model trace logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Reasoning,
    /// Accepted as both `non-reasoning` and the wire spelling
    /// `non_reasoning`.
    #[value(alias = "non_reasoning")]
    NonReasoning,
}

impl From<RoleArg> for ModelRole {
    fn from(value: RoleArg) -> Self {
        match value {
            RoleArg::Reasoning => ModelRole::Reasoning,
            RoleArg::NonReasoning => ModelRole::NonReasoning,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SystemArg {
    Ask,
    Ffoa,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    /// Marginals modeled on published frontier-model benchmark numbers,
    /// with realistic confidence/latency dependence.
    Paper,
    /// Same marginals with all dependence removed (drag-free control).
    Independent,
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    grid_start: f64,
    #[arg(long, default_value_t = 0.2)]
    grid_end: f64,
    #[arg(long, default_value_t = 0.005)]
    grid_step: f64,
}

impl GridArgs {
    fn build(&self) -> Result<Vec<f64>> {
        grid_from(self.grid_start, self.grid_end, self.grid_step)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate one per-model JSONL trace file.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
    },
    /// Join non-reasoning and reasoning traces; print the join report.
    Join {
        #[arg(long)]
        nr: PathBuf,
        #[arg(long)]
        r: PathBuf,
    },
    /// Calibrate thresholds and print the policy as JSON.
    Calibrate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        u: Option<f64>,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate, route every query, and write per-query outcomes as CSV.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        u: Option<f64>,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an accuracy-rejection curve as CSV.
    Curve {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        u: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the grid-averaged AUARC summary as JSON.
    Auarc {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        u: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency-drag decomposition with a permutation test, as JSON.
    Drag {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local linear regression of reasoning correctness on output tokens.
    Loess {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = crate::smooth::DEFAULT_SPAN)]
        span: f64,
        #[arg(long, default_value_t = crate::smooth::DEFAULT_EVAL_POINTS)]
        points: usize,
        /// Clamp fitted values and the band to [0, 1] for plotting.
        #[arg(long)]
        clamp: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic trace directory (two JSONL files + spec echo).
    Synth {
        #[arg(long, value_enum, default_value = "paper")]
        preset: PresetArg,
        /// Full generative spec as JSON; overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect real traces from an OpenAI-compatible endpoint.
    Collect {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        endpoint: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Run the confidence probe after each answer (non-reasoning only).
        #[arg(long)]
        probe: bool,
        /// Override the built-in probe prompt template.
        #[arg(long)]
        probe_template: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        failures: Option<PathBuf>,
    },
    /// Full pipeline: curves, AUARC, savings, drag, profile, and the token
    /// diagnostic, written to a directory.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = crate::report::default_u_values())]
        u_values: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Rejection target for the drag analysis rows.
        #[arg(long, default_value_t = 0.1)]
        r: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = crate::smooth::DEFAULT_SPAN)]
        span: f64,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse and dispatch. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let line = json!({
                "error": e.to_string(),
                "parameter": e.parameter(),
            });
            eprintln!("{line}");
            1
        }
    }
}

fn resolve_system(system: SystemArg, u: Option<f64>) -> Result<System> {
    match (system, u) {
        (SystemArg::Ask, None) => Ok(System::Ask),
        (SystemArg::Ask, Some(u)) => Err(Error::InvalidParam {
            name: "u",
            value: u,
            constraint: "only valid with --system ffoa",
        }),
        (SystemArg::Ffoa, Some(u)) => Ok(System::Ffoa { utilization: u }),
        (SystemArg::Ffoa, None) => Err(Error::InvalidParam {
            name: "u",
            value: f64::NAN,
            constraint: "required with --system ffoa",
        }),
    }
}

fn load_trace(dir: &Path) -> Result<Trace> {
    let (trace, _) = load_trace_dir(dir)?;
    Ok(trace)
}

fn print_compact<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string(value).expect("cli outputs serialize")
    );
}

fn maybe_write_json<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    if let Some(path) = out {
        crate::report::write_json_pretty(path, value)?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { input, role } => {
            let records = ingest(&input, role.into())?;
            print_compact(&json!({
                "ok": true,
                "records": records.len(),
                "role": ModelRole::from(role).to_string(),
            }));
            Ok(())
        }
        Command::Join { nr, r } => {
            let nr_records = ingest(&nr, ModelRole::NonReasoning)?;
            let r_records = ingest(&r, ModelRole::Reasoning)?;
            let (_, report) = join(&nr_records, &r_records)?;
            print_compact(&report);
            Ok(())
        }
        Command::Calibrate {
            trace,
            system,
            u,
            r,
            out,
        } => {
            let trace = load_trace(&trace)?;
            match resolve_system(system, u)? {
                System::Ask => {
                    let policy = calibrate_ask(&trace, r)?;
                    print_compact(&policy);
                    maybe_write_json(&out, &policy)
                }
                System::Ffoa { utilization } => {
                    let config = calibrate_ffoa(&trace, utilization, r)?;
                    print_compact(&config);
                    maybe_write_json(&out, &config)
                }
            }
        }
        Command::Simulate {
            trace,
            system,
            u,
            r,
            out,
        } => {
            let trace = load_trace(&trace)?;
            let outcomes = match resolve_system(system, u)? {
                System::Ask => simulate_ask(&trace, &calibrate_ask(&trace, r)?)?,
                System::Ffoa { utilization } => {
                    simulate_ffoa(&trace, &calibrate_ffoa(&trace, utilization, r)?)?
                }
            };
            crate::report::write_outcomes_csv(&out, &outcomes)?;
            print_compact(&realized_rates(&outcomes)?);
            Ok(())
        }
        Command::Curve {
            trace,
            system,
            u,
            grid,
            out,
        } => {
            let trace = load_trace(&trace)?;
            let system = resolve_system(system, u)?;
            let curve = accuracy_rejection_curve(&trace, system, &grid.build()?)?;
            crate::report::write_curve_csv(&out, &curve)?;
            print_compact(&json!({ "points": curve.len(), "out": out }));
            Ok(())
        }
        Command::Auarc {
            trace,
            system,
            u,
            grid,
            out,
        } => {
            let trace = load_trace(&trace)?;
            let system = resolve_system(system, u)?;
            let curve = accuracy_rejection_curve(&trace, system, &grid.build()?)?;
            let summary = auarc(&curve)?;
            print_compact(&summary);
            maybe_write_json(&out, &summary)
        }
        Command::Drag {
            trace,
            u,
            r,
            permutations,
            seed,
            out,
        } => {
            let trace = load_trace(&trace)?;
            let config = calibrate_ffoa(&trace, u, r)?;
            let report = latency_drag(&trace, &config)?;
            let permutation = drag_permutation_test(&trace, &config, permutations, seed)?;
            let combined = json!({
                "actual": report.actual,
                "ideal": report.ideal,
                "drag": report.drag,
                "permutation": permutation,
            });
            print_compact(&combined);
            maybe_write_json(&out, &combined)
        }
        Command::Loess {
            trace,
            span,
            points,
            clamp,
            out,
        } => {
            if points < 2 {
                return Err(Error::InvalidParam {
                    name: "points",
                    value: points as f64,
                    constraint: "must be at least 2",
                });
            }
            let trace = load_trace(&trace)?;
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
            let (lo, hi) = x
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            let eval_points: Vec<f64> = (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect();
            let fit = loess_fit(&x, &y, span, &eval_points)?;
            crate::report::write_loess_csv(&out, &fit, clamp)?;
            print_compact(&json!({ "points": fit.eval_points.len(), "out": out }));
            Ok(())
        }
        Command::Synth {
            preset,
            spec,
            n,
            seed,
            out,
        } => {
            let mut spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    serde_json::from_str::<SynthSpec>(&text)
                        .map_err(|e| Error::Config(format!("invalid spec file: {e}")))?
                }
                None => match preset {
                    PresetArg::Paper => paper_preset(),
                    PresetArg::Independent => paper_preset().with_independence(),
                },
            };
            if let Some(n) = n {
                spec.n = n;
            }
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let trace = generate(&spec)?;
            std::fs::create_dir_all(&out).map_err(|source| Error::Io {
                path: out.display().to_string(),
                source,
            })?;
            let (nr_records, r_records) = split_records(&trace);
            let nr_path = out.join(NR_TRACE_FILE);
            let r_path = out.join(R_TRACE_FILE);
            let spec_path = out.join("synth_spec.json");
            write_jsonl(&nr_path, &nr_records)?;
            write_jsonl(&r_path, &r_records)?;
            crate::report::write_json_pretty(&spec_path, &spec)?;
            print_compact(&json!({
                "n": spec.n,
                "seed": spec.seed,
                "files": [nr_path, r_path, spec_path],
            }));
            Ok(())
        }
        Command::Collect {
            dataset,
            endpoint,
            role,
            probe,
            probe_template,
            out,
            failures,
        } => {
            let items = collector::load_dataset(&dataset)?;
            let config = EndpointConfig::from_toml_path(&endpoint)?;
            let mut options = CollectOptions::new(role.into(), probe, out);
            if let Some(path) = failures {
                options.failures_path = path;
            }
            if let Some(path) = probe_template {
                options.probe_template =
                    std::fs::read_to_string(&path).map_err(|source| Error::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Config(format!("tokio runtime: {e}")))?;
            let (_, summary) = runtime.block_on(collector::collect(&items, &config, &options))?;
            print_compact(&summary);
            Ok(())
        }
        Command::Report {
            trace,
            u_values,
            grid,
            r,
            bins,
            span,
            permutations,
            seed,
            out,
        } => {
            let trace = load_trace(&trace)?;
            let options = ReportOptions {
                u_values,
                grid: grid.build()?,
                drag_rejection: r,
                profile_bins: bins,
                loess_span: span,
                permutations,
                seed,
            };
            let written = write_report(&trace, &options, &out)?;
            print_compact(&json!({ "written": written }));
            Ok(())
        }
    }
}
