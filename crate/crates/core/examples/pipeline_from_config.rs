//! Run the whole loop from a JSON config: generate or load data, extract base
//! patterns, build the reference bank, train, evaluate and write artifacts.
//!
//! cargo run --release --example pipeline_from_config -- [config.json] [out-dir]

use std::path::PathBuf;

use mfrs::cli::pipeline::{run_pipeline, write_artifacts, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/compose1_noiseless.json")
    });
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mfrs-pipeline"));

    let cfg = PipelineConfig::load(&config)?;
    let outcome = run_pipeline(&cfg)?;
    let summary = write_artifacts(&cfg, &outcome, &out, None)?;
    println!("base patterns: {}", serde_json::to_string(&summary.base_patterns)?);
    println!("test mse {:.6}, mae {:.6} over {} windows", summary.eval.mse, summary.eval.mae, summary.eval.windows);
    for b in &summary.baselines {
        match (&b.report, &b.skipped) {
            (Some(r), _) => println!("{}: mse {:.4}", b.name, r.mse),
            (None, Some(why)) => println!("{}: skipped ({why})", b.name),
            _ => {}
        }
    }
    println!("channel independence deviation {:.1e}", summary.channel_independence.max_deviation);
    println!("artifacts in {}", out.display());
    Ok(())
}
