//! Train on a Compose benchmark and compare against the optimal forecaster
//! and the naive baselines.
//!
//! cargo run --release --example compose_benchmark -- [family] [sigma|lambda] [horizon] [epochs] [waveform]

use std::time::Instant;

use mfrs::evalharness::{evaluate, naive_baselines, ModelForecaster};
use mfrs::forecaster::{train, ForecastModel, ModelConfig, TrainConfig, TrainData};
use mfrs::frequency::Frequency;
use mfrs::refseries::{generate, Waveform};
use mfrs::series::{chronological_split, SplitSpec};
use mfrs::synthbench::{generate_compose, optimal_metrics, ComposeSpec, Family, Noise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: Family = args.first().map_or("compose1", String::as_str).parse()?;
    let level: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let horizon: usize = args.get(2).map_or(Ok(96), |s| s.parse())?;
    let epochs: usize = args.get(3).map_or(Ok(30), |s| s.parse())?;
    let waveform: Waveform = args.get(4).map_or("sine", String::as_str).parse()?;

    let noise = if family.is_gaussian() {
        Noise::Gaussian { mu: 0.0, sigma: level }
    } else {
        Noise::Poisson { lambda: level }
    };
    let spec = ComposeSpec::family(family, noise, 7);
    let data = generate_compose(&spec)?;
    let split = chronological_split(&data.x, SplitSpec::default())?;

    let freqs = spec
        .periods
        .iter()
        .map(|&p| Frequency::of_period(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rs = generate(&freqs, data.x.len(), waveform)?;

    let mut model = ForecastModel::new(ModelConfig::new(96, horizon), 7)?;
    let cfg = TrainConfig { epochs, seed: 7, ..TrainConfig::default() };
    let started = Instant::now();
    let report = train(
        &mut model,
        TrainData {
            train: &split.train,
            train_origin: split.train_origin(),
            val: Some((&split.val, split.val_origin())),
            rs: &rs,
        },
        &cfg,
    )?;
    println!("trained {} epochs in {:.1?} (best epoch {})", report.history.len(), started.elapsed(), report.best_epoch);

    let f = ModelForecaster { model: &model, rs: &rs };
    let eval = evaluate(&f, &split.test, split.test_origin())?.with_optimal(optimal_metrics(&noise)?);
    println!("test mse {:.4} mae {:.4} (optimal mse {:.4} mae {:.4})", eval.mse, eval.mae,
        eval.optimal.unwrap().mse_opt, eval.optimal.unwrap().mae_opt);
    for b in naive_baselines(&split.test, split.test_origin(), 96, horizon, spec.periods.iter().copied().max())? {
        match (b.report, b.skipped) {
            (Some(r), _) => println!("{}: mse {:.4} mae {:.4}", b.name, r.mse, r.mae),
            (None, Some(why)) => println!("{}: skipped ({why})", b.name),
            _ => {}
        }
    }
    Ok(())
}
