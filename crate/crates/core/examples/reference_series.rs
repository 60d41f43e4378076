//! Build reference-series banks in every waveform and show that shifting by
//! the common period leaves the slice unchanged.
//!
//! cargo run --release --example reference_series

use mfrs::frequency::Frequency;
use mfrs::refseries::{generate, slice_rs, Waveform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let freqs = [Frequency::new(1, 24)?, Frequency::new(2, 24)?, Frequency::new(1, 168)?];
    for wf in Waveform::ALL {
        let rs = generate(&freqs, 24 * 7 * 4, wf)?;
        let period = rs.common_period() as usize;
        let a = slice_rs(&rs, 5, 96)?;
        let b = slice_rs(&rs, 5 + period, 96)?;
        let first: Vec<String> = rs.values().row(6).iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "{wf:>9}: columns {:?}, common period {period}, shift-invariant {}, row 6 = [{}]",
            rs.column_names(),
            a == b,
            first.join(", ")
        );
    }
    let rs = generate(&freqs, 48, Waveform::Pulse)?;
    println!("manifest: {}", serde_json::to_string(&rs.manifest())?);
    Ok(())
}
