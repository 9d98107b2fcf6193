//! Local linear regression of reasoning correctness against output-token
//! count: the diagnostic behind token-threshold deferral.
//!
//! ```bash
//! cargo run --release --example token_length_diagnostic
//! ```

use askfast::smooth::{loess_fit, DEFAULT_SPAN};
use askfast::synth::{generate, paper_preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate(&paper_preset())?;
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

    // Evaluate across the bulk of the token distribution.
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[(0.01 * sorted.len() as f64) as usize];
    let hi = sorted[(0.99 * sorted.len() as f64) as usize];
    let eval_points: Vec<f64> = (0..25).map(|i| lo + (hi - lo) * i as f64 / 24.0).collect();

    let fit = loess_fit(&x, &y, DEFAULT_SPAN, &eval_points)?;
    println!("correctness vs reasoning-trace length (span {DEFAULT_SPAN}):");
    println!("{:>10} {:>10} {:>18}", "tokens", "fitted", "+/- 1 sigma band");
    for i in 0..fit.eval_points.len() {
        let mean = fit.fitted_mean[i].clamp(0.0, 1.0);
        let lo_band = (fit.fitted_mean[i] - fit.sigma_band[i]).clamp(0.0, 1.0);
        let hi_band = (fit.fitted_mean[i] + fit.sigma_band[i]).clamp(0.0, 1.0);
        let pos = (mean * 40.0).round() as usize;
        println!(
            "{:>10.0} {:>10.3} [{lo_band:.3}, {hi_band:.3}]  {}*",
            fit.eval_points[i],
            mean,
            " ".repeat(pos)
        );
    }
    println!();
    println!("flat near short traces, falling for long ones: long reasoning runs are risky");
    Ok(())
}
