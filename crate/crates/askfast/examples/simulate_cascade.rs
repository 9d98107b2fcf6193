//! Route every query through both systems and inspect per-query outcomes
//! and realized rates.
//!
//! ```bash
//! cargo run --example simulate_cascade
//! ```

use askfast::calibrate::{calibrate_ask, calibrate_ffoa};
use askfast::cascade::{realized_rates, simulate_ask, simulate_ffoa, Route};
use askfast::synth::{generate, paper_preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = paper_preset();
    spec.n = 1000;
    let trace = generate(&spec)?;

    let ask = calibrate_ask(&trace, 0.10)?;
    let ask_outcomes = simulate_ask(&trace, &ask)?;
    let config = calibrate_ffoa(&trace, 0.5, 0.10)?;
    let ffoa_outcomes = simulate_ffoa(&trace, &config)?;

    for (name, outcomes) in [("ask", &ask_outcomes), ("fail fast, or ask", &ffoa_outcomes)] {
        let rates = realized_rates(outcomes)?;
        let mean_latency: f64 =
            outcomes.iter().map(|o| o.latency_seconds).sum::<f64>() / outcomes.len() as f64;
        let mean_cost: f64 =
            outcomes.iter().map(|o| o.cost_usd).sum::<f64>() / outcomes.len() as f64;
        println!("{name}:");
        println!(
            "  utilization {:.3}  fail-fast {:.3}  pass {:.3}  rejection {:.3}",
            rates.utilization, rates.fail_fast_rate, rates.pass_rate, rates.rejection_rate
        );
        println!("  mean latency {mean_latency:.2}s  mean cost ${mean_cost:.5}");
        for route in [
            Route::NrAnswer,
            Route::RAnswer,
            Route::HumanViaFailFast,
            Route::HumanViaReasoning,
        ] {
            let count = outcomes.iter().filter(|o| o.route == route).count();
            if count > 0 {
                println!("  {:>22}: {count}", route.as_str());
            }
        }
        println!();
    }

    println!("first five fronted-system outcomes:");
    for outcome in ffoa_outcomes.iter().take(5) {
        println!(
            "  {} -> {:<22} correct={:<8} latency={:.2}s cost=${:.5}",
            outcome.query_id,
            outcome.route.as_str(),
            outcome
                .counted_correct
                .map_or("(human)".to_string(), |c| c.to_string()),
            outcome.latency_seconds,
            outcome.cost_usd
        );
    }
    Ok(())
}
