//! Turn (utilization, target rejection) into concrete thresholds: the
//! token threshold for the reasoning-plus-human system and the confidence
//! thresholds for the fronted system.
//!
//! ```bash
//! cargo run --example calibrate_policies
//! ```

use askfast::calibrate::{calibrate_ask, calibrate_ffoa, empirical_quantile};
use askfast::synth::{generate, paper_preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = paper_preset();
    spec.n = 2000;
    let trace = generate(&spec)?;

    let tokens: Vec<f64> = trace
        .records
        .iter()
        .map(|j| j.r.output_tokens as f64)
        .collect();
    println!("reasoning-trace token quantiles:");
    for q in [0.5, 0.8, 0.9, 0.95, 1.0] {
        println!("  q{:<4} = {:>8.0}", q, empirical_quantile(&tokens, q)?);
    }

    println!();
    println!("token-threshold policies (answer iff tokens <= T):");
    for r in [0.0, 0.05, 0.1, 0.2] {
        let policy = calibrate_ask(&trace, r)?;
        println!(
            "  target rejection {:>4.0}% -> T = {}",
            r * 100.0,
            policy.token_threshold
        );
    }

    println!();
    println!("fronted-system configs at target rejection 10%:");
    for u in [0.0, 0.3, 0.5, 0.75, 1.0] {
        let config = calibrate_ffoa(&trace, u, 0.10)?;
        println!(
            "  u={:<4} c_fail_fast={:<12} c_pass={:<8.4} T={:<12} realized (ff {:.3}, pass {:.3}, respond {:.3})",
            u,
            config
                .c_fail_fast
                .map_or("none".to_string(), |c| format!("{c:.4}")),
            config.c_pass,
            if config.r_token_threshold == u64::MAX {
                "inf".to_string()
            } else {
                config.r_token_threshold.to_string()
            },
            config.realized.fail_fast_rate,
            config.realized.pass_rate,
            config.realized.respond_rate,
        );
    }

    println!();
    println!("full config as JSON (what `askfast calibrate` prints):");
    let config = calibrate_ffoa(&trace, 0.5, 0.10)?;
    println!("{}", serde_json::to_string_pretty(&config)?);
    Ok(())
}
