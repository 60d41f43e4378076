//! Joint forecasts equal per-channel forecasts because attention only runs
//! from variates to reference series. A forecaster that mixes channels fails
//! the same check.
//!
//! cargo run --release --example channel_independence

use mfrs::evalharness::{channel_independence_test, Forecaster, ModelForecaster};
use mfrs::error::Result;
use mfrs::forecaster::{ForecastModel, ModelConfig};
use mfrs::frequency::Frequency;
use mfrs::refseries::{generate, Waveform};
use ndarray::{Array2, ArrayView2};

struct Mixing<'a>(ModelForecaster<'a>);

impl Forecaster for Mixing<'_> {
    fn lookback(&self) -> usize {
        self.0.lookback()
    }
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn forecast(&self, block: ArrayView2<'_, f64>, start: usize) -> Result<Array2<f64>> {
        let shared = block.mean().unwrap_or(0.0);
        Ok(self.0.forecast(block, start)? + 0.01 * shared)
    }
}

fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        lookback: 48,
        horizon: 24,
        hidden: 16,
        blocks: 2,
        heads: 2,
        ..ModelConfig::default()
    };
    let model = ForecastModel::new(cfg, 5)?;
    let rs = generate(&[Frequency::new(1, 24)?, Frequency::new(1, 12)?], 500, Waveform::Sine)?;
    let block = Array2::from_shape_fn((48, 5), |(t, c)| (t as f64 / (3.0 + c as f64)).sin() + c as f64);

    let plain = ModelForecaster { model: &model, rs: &rs };
    let ok = channel_independence_test(&plain, block.view(), 100)?;
    println!("model:  max deviation {:.2e}, passed {}", ok.max_deviation, ok.passed);
    let bad = channel_independence_test(&Mixing(plain), block.view(), 100)?;
    println!("mixing: max deviation {:.2e}, passed {}", bad.max_deviation, bad.passed);
    Ok(())
}
