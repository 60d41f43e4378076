//! Compare the hand-written backward pass with central finite differences on
//! a tiny model.
//!
//! cargo run --release --example gradient_check

use mfrs::forecaster::{Example, ForecastModel, ModelConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn loss(model: &ForecastModel, x: &Array2<f64>, rs: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let pred = model.forward(x.view(), rs.view()).unwrap();
    (&pred - y).mapv(|e| e * e).mean().unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        lookback: 8,
        horizon: 4,
        hidden: 6,
        ..ModelConfig::default()
    };
    let model = ForecastModel::new(cfg, 1)?;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut random = |r, c| Array2::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0));
    let (x, rs, y) = (random(8, 2), random(8, 2), random(4, 2));

    let (pred, cache) = model.forward_batch(&[Example { lookback: x.view(), rs: rs.view() }])?;
    let d = (&pred[0] - &y) * (2.0 / y.len() as f64);
    let grads = model.backward(&cache, &[d])?.flat_params();

    let h = 1e-5;
    for (ti, (name, shape)) in model.param_shapes().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..grads[ti].len() {
            let probe = |delta: f64| {
                let mut m = model.clone();
                let mut i = 0;
                m.visit_mut(&mut |_, v| {
                    if i == ti {
                        v[j] += delta;
                    }
                    i += 1;
                });
                loss(&m, &x, &rs, &y)
            };
            let numeric = (probe(h) - probe(-h)) / (2.0 * h);
            let rel = (numeric - grads[ti][j]).abs() / numeric.abs().max(grads[ti][j].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        println!("{name:<24} {shape:?}: max relative error {worst:.2e}");
    }
    Ok(())
}
