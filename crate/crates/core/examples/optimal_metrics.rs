//! The error floor of the Compose benchmarks: closed forms, Monte-Carlo
//! cross-checks and the "expectation is the best constant" experiment.
//!
//! cargo run --release --example optimal_metrics

use mfrs::synthbench::{monte_carlo_mad, optimal_metrics, optimal_prediction_check, Noise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<16} {:>8} {:>8} {:>10}", "noise", "mse_opt", "mae_opt", "mc mae");
    let cases = (1..=5)
        .map(|s| Noise::Gaussian { mu: 0.0, sigma: s as f64 })
        .chain((1..=5).map(|l| Noise::Poisson { lambda: l as f64 }));
    for noise in cases {
        let opt = optimal_metrics(&noise)?;
        let (mc, se) = monte_carlo_mad(&noise, 1_000_000, 11);
        let label = match noise {
            Noise::Gaussian { sigma, .. } => format!("gaussian s={sigma}"),
            Noise::Poisson { lambda } => format!("poisson l={lambda}"),
        };
        println!("{label:<16} {:>8.3} {:>8.3} {:>10.4} +- {:.4}", opt.mse_opt, opt.mae_opt, mc, se);
    }

    let report = optimal_prediction_check(&Noise::Poisson { lambda: 2.0 }, 100_000, 3)?;
    println!(
        "\npoisson(2): predicting E[U] = {} gives mse {:.4} (variance {})",
        report.expectation, report.mse_at_expectation, report.variance
    );
    for p in &report.grid {
        println!("  E[U] {:+.3} -> mse {:.4}", p.offset, p.mse);
    }
    println!("expectation is best: {}", report.expectation_is_best);
    Ok(())
}
