//! Recover the time step of unlabeled observation windows by sliding them
//! over the tail of the training data.
//!
//! cargo run --release --example alignment

use mfrs::alignment::align_to_training;
use mfrs::series::{chronological_split, SplitSpec};
use mfrs::synthbench::{generate_compose, ComposeSpec, Family, Noise};
use ndarray::s;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ComposeSpec::family(Family::Compose1, Noise::Gaussian { mu: 0.0, sigma: 0.5 }, 21);
    let data = generate_compose(&spec)?;
    let split = chronological_split(&data.x, SplitSpec::default())?;
    let fundamental = spec.fundamental_period() as usize;
    let channels: Vec<usize> = (0..data.x.channels()).collect();

    for start in [0, 50, 777, 3001, 12345] {
        let obs = data.x.values().slice_move(s![start..start + 96, ..]);
        let (res, absolute) = align_to_training(obs, &split.train, fundamental, &channels)?;
        println!(
            "window at {start:>5}: xi {:>2}, aligned step {absolute:>5}, same phase {}, score {:.3}",
            res.xi,
            absolute % fundamental == start % fundamental,
            res.score
        );
    }
    Ok(())
}
