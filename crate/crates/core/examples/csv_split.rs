//! Read a CSV with a timestamp column, split it chronologically and
//! standardize with training statistics.
//!
//! cargo run --release --example csv_split

use mfrs::series::{chronological_split, read_csv, write_csv, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut text = String::from("date,load,temp\n");
    for h in 0..240 {
        let load = 10.0 + (h as f64 * std::f64::consts::PI / 12.0).sin();
        let temp = 20.0 + 0.01 * h as f64;
        text.push_str(&format!("2024-01-{:02} {:02}:00,{load:.4},{temp:.2}\n", 1 + h / 24, h % 24));
    }
    let series = read_csv(text.as_bytes())?;
    println!(
        "{} rows x {} channels {:?}, first stamp {:?}",
        series.len(),
        series.channels(),
        series.channel_names(),
        series.timestamps().and_then(|t| t.first())
    );

    let split = chronological_split(&series, SplitSpec::default())?;
    println!(
        "train {}@{}, val {}@{}, test {}@{}",
        split.train.len(),
        split.train_origin(),
        split.val.len(),
        split.val_origin(),
        split.test.len(),
        split.test_origin()
    );
    let stats = split.train.channel_stats();
    let test = split.test.standardized(&stats)?;
    let mut out = Vec::new();
    write_csv(&mut out, &test.rows(0, 3)?)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
