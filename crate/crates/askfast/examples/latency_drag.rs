//! Latency drag: the fronted system's actual mean latency versus the ideal
//! prediction, the conditional-latency profile that explains the gap, and a
//! permutation test for the null of no drag.
//!
//! ```bash
//! cargo run --release --example latency_drag
//! ```

use askfast::calibrate::calibrate_ffoa;
use askfast::metrics::{conditional_latency_profile, drag_permutation_test, latency_drag};
use askfast::synth::{generate, paper_preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let correlated = generate(&paper_preset())?;
    let independent = generate(&paper_preset().with_independence())?;

    for (name, trace) in [("preset", &correlated), ("independence variant", &independent)] {
        let config = calibrate_ffoa(trace, 0.5, 0.10)?;
        let drag = latency_drag(trace, &config)?;
        let perm = drag_permutation_test(trace, &config, 1000, 0)?;
        println!("{name}:");
        println!(
            "  actual {:.2}s  ideal {:.2}s  drag {:+.3}s  ({:.1} permutation SEs from null)",
            drag.actual,
            drag.ideal,
            drag.drag,
            (drag.drag - perm.null_mean).abs() / perm.null_std
        );
    }

    println!();
    println!("conditional reasoning latency by confidence decile (preset):");
    for bin in conditional_latency_profile(&correlated, 10)? {
        let bar = "#".repeat((bin.mean_r_latency_seconds / 4.0).round() as usize);
        println!(
            "  p_true pct {:>3.0}-{:>3.0}: {:>7.2}s {bar}",
            bin.percentile_low * 100.0,
            bin.percentile_high * 100.0,
            bin.mean_r_latency_seconds
        );
    }
    println!();
    println!(
        "the falling profile is what makes the passed subset slower than the marginal: \
         conditioning on low confidence selects long reasoning runs"
    );
    Ok(())
}
