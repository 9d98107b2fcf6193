//! Accuracy-rejection curves and AUARC for the token-threshold system and
//! the fronted system across utilization levels.
//!
//! ```bash
//! cargo run --release --example rejection_curves
//! ```

use askfast::metrics::{accuracy_rejection_curve, auarc, default_grid, System};
use askfast::synth::{generate, paper_preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate(&paper_preset())?;
    let grid = default_grid();

    let mut systems = vec![("ask".to_string(), System::Ask)];
    for u in [0.3, 0.5, 0.75] {
        systems.push((format!("ffoa u={u}"), System::Ffoa { utilization: u }));
    }

    let mut curves = Vec::new();
    for (name, system) in &systems {
        let curve = accuracy_rejection_curve(&trace, *system, &grid)?;
        let summary = auarc(&curve)?;
        println!(
            "{name:<12} AUARC {:.4}  grid-mean latency {:>7.2}s  grid-mean cost ${:.5}",
            summary.auarc, summary.mean_latency, summary.mean_cost
        );
        curves.push((name.clone(), curve));
    }

    println!();
    println!("conditional error (%) at selected rejection rates:");
    print!("{:<12}", "rejection");
    for r in [0.0, 0.05, 0.10, 0.15, 0.20] {
        print!("{:>9.0}%", r * 100.0);
    }
    println!();
    for (name, curve) in &curves {
        print!("{name:<12}");
        for idx in [0usize, 10, 20, 30, 40] {
            print!("{:>10.2}", (1.0 - curve[idx].conditional_accuracy) * 100.0);
        }
        println!();
    }
    Ok(())
}
