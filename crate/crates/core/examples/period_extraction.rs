//! Find the daily and weekly cycles of an hourly signal and list the
//! harmonics that score highest.
//!
//! cargo run --release --example period_extraction

use std::f64::consts::PI;

use mfrs::basepatterns::{analyze, harmonic_candidates, ExtractionConfig};
use mfrs::series::MultiSeries;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let len = 168 * 400;
    let signal: Vec<f64> = (0..len)
        .map(|t| {
            let t = t as f64;
            2.0 * (2.0 * PI * t / 24.0).sin()
                + 0.6 * (2.0 * PI * t / 12.0).sin()
                + (2.0 * PI * t / 168.0).sin()
        })
        .collect();
    let series = MultiSeries::from_columns(&[signal])?;

    let analysis = analyze(&series, &ExtractionConfig::default())?;
    let patterns = &analysis.patterns;
    println!("primary periods: {:?}", patterns.primary_periods());
    println!(
        "harmonic candidates: {}",
        harmonic_candidates(patterns.primary_periods())
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    for h in patterns.harmonics() {
        println!("  harmonic {:>7}  score {:.4}", h.freq.to_string(), h.score);
    }
    println!("{}", serde_json::to_string(&patterns.to_report())?);
    Ok(())
}
