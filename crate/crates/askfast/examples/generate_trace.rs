//! Generate a synthetic joined trace with the built-in preset and write it
//! as a trace directory (two JSONL files plus the spec echo).
//!
//! ```bash
//! cargo run --example generate_trace -- [OUT_DIR]
//! ```

use askfast::metrics::baseline_stats;
use askfast::synth::{generate, paper_preset, split_records, spearman};
use askfast::trace::{write_jsonl, NR_TRACE_FILE, R_TRACE_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-trace".into());

    let spec = paper_preset();
    let trace = generate(&spec)?;
    let stats = baseline_stats(&trace)?;

    println!("generated {} joined records (seed {})", trace.len(), spec.seed);
    println!();
    println!(
        "{:<16} {:>12} {:>14} {:>12} {:>14}",
        "arm", "error rate", "latency (s)", "cost ($)", "tokens"
    );
    for (name, arm) in [("non-reasoning", &stats.nr), ("reasoning", &stats.r)] {
        println!(
            "{:<16} {:>12.4} {:>14.2} {:>12.6} {:>14.0}",
            name,
            arm.error_rate,
            arm.mean_latency_seconds,
            arm.mean_cost_usd,
            arm.mean_output_tokens
        );
    }

    let p: Vec<f64> = trace.records.iter().map(|j| j.nr.p_true).collect();
    let r_lat: Vec<f64> = trace.records.iter().map(|j| j.r.latency_seconds).collect();
    let r_tok: Vec<f64> = trace
        .records
        .iter()
        .map(|j| j.r.output_tokens as f64)
        .collect();
    println!();
    println!("spearman(p_true, r latency) = {:+.3}", spearman(&p, &r_lat));
    println!("spearman(p_true, r tokens)  = {:+.3}", spearman(&p, &r_tok));

    std::fs::create_dir_all(&out_dir)?;
    let (nr, r) = split_records(&trace);
    write_jsonl(std::path::Path::new(&out_dir).join(NR_TRACE_FILE).as_path(), &nr)?;
    write_jsonl(std::path::Path::new(&out_dir).join(R_TRACE_FILE).as_path(), &r)?;
    println!();
    println!("trace directory written to {out_dir}");
    Ok(())
}
