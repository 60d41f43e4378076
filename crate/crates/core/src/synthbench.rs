//! Synthetic "Compose" benchmarks with closed-form optimal errors.
//!
//! A Compose series is `X = Z + U`: `Z` is a per-channel sum of sines with
//! known integer periods (perfectly predictable) and `U` is i.i.d. noise
//! (unpredictable). The best any forecaster can do is predict `Z + E[U]`,
//! whose MSE is `Var(U)` and whose MAE is `E|U - E[U]|`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};
use crate::frequency::lcm;
use crate::series::MultiSeries;

pub const SHORT_PERIODS: [u64; 4] = [72, 36, 24, 18];
pub const LONG_PERIODS: [u64; 4] = [720, 360, 240, 180];

const MAX_LEN: usize = 100_000;
const MIN_DEFAULT_LEN: usize = 14_400;
const MAX_LAMBDA: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    Gaussian { mu: f64, sigma: f64 },
    Poisson { lambda: f64 },
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Noise::Gaussian { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
                    return Err(MfrsError::validation(format!(
                        "gaussian noise needs finite mu and sigma >= 0, got ({mu}, {sigma})"
                    )));
                }
            }
            Noise::Poisson { lambda } => {
                if !(lambda > 0.0 && lambda <= MAX_LAMBDA) {
                    return Err(MfrsError::validation(format!(
                        "poisson noise needs 0 < lambda <= {MAX_LAMBDA}, got {lambda}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Noise::Gaussian { mu, .. } => mu,
            Noise::Poisson { lambda } => lambda,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Noise::Gaussian { sigma, .. } => sigma * sigma,
            Noise::Poisson { lambda } => lambda,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(*self, Noise::Gaussian { sigma, .. } if sigma == 0.0)
    }

    /// Draws one sample. Poisson uses inversion of a single uniform draw so
    /// the stream consumption is platform independent.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian { mu, sigma } => {
                let g: f64 = rng.sample(StandardNormal);
                sigma * g + mu
            }
            Noise::Poisson { lambda } => poisson_by_inversion(lambda, rng.gen::<f64>()) as f64,
        }
    }
}

/// Smallest `k` with `P(X <= k) >= u` for `X ~ Poisson(lambda)`.
pub fn poisson_by_inversion(lambda: f64, u: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the tail guard stops the walk once the pmf has underflowed
    while u > cdf && k < 10 * (lambda as u64 + 10) {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// The four named Compose families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// short periods + Gaussian noise
    Compose1,
    /// long periods + Gaussian noise
    Compose2,
    /// short periods + Poisson noise
    Compose3,
    /// long periods + Poisson noise
    Compose4,
}

impl Family {
    pub fn periods(self) -> [u64; 4] {
        match self {
            Family::Compose1 | Family::Compose3 => SHORT_PERIODS,
            Family::Compose2 | Family::Compose4 => LONG_PERIODS,
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, Family::Compose1 | Family::Compose2)
    }
}

impl std::str::FromStr for Family {
    type Err = MfrsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "compose1" => Ok(Family::Compose1),
            "compose2" => Ok(Family::Compose2),
            "compose3" => Ok(Family::Compose3),
            "compose4" => Ok(Family::Compose4),
            other => Err(MfrsError::validation(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeSpec {
    pub periods: Vec<u64>,
    /// Per-channel amplitudes, one per period. `None` draws them from
    /// `U[0.5, 2]` with `seed`.
    pub amplitudes: Option<Vec<Vec<f64>>>,
    pub noise: Noise,
    pub channels: usize,
    pub len: usize,
    pub seed: u64,
}

impl ComposeSpec {
    /// A family with its default size: four channels and
    /// `L = max(20 * lcm(periods), 14400)`, capped at 100000.
    pub fn family(family: Family, noise: Noise, seed: u64) -> Self {
        let periods = family.periods().to_vec();
        let len = default_len(&periods);
        Self {
            periods,
            amplitudes: None,
            noise,
            channels: 4,
            len,
            seed,
        }
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.len = len;
        self
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.is_empty() {
            return Err(MfrsError::validation("compose needs at least one period"));
        }
        if let Some(p) = self.periods.iter().find(|&&p| p < 2) {
            return Err(MfrsError::validation(format!("period {p} is below 2")));
        }
        if self.channels < 1 {
            return Err(MfrsError::validation("compose needs at least one channel"));
        }
        if self.len < 2 {
            return Err(MfrsError::validation("compose needs at least 2 steps"));
        }
        if let Some(amps) = &self.amplitudes {
            if amps.len() != self.channels || amps.iter().any(|a| a.len() != self.periods.len()) {
                return Err(MfrsError::validation(
                    "amplitudes must be channels x periods",
                ));
            }
            if amps.iter().flatten().any(|a| !a.is_finite()) {
                return Err(MfrsError::validation("amplitudes must be finite"));
            }
        }
        self.noise.validate()
    }

    /// Amplitudes in effect, drawing them if not given explicitly.
    pub fn resolved_amplitudes(&self) -> Vec<Vec<f64>> {
        if let Some(a) = &self.amplitudes {
            return a.clone();
        }
        let mut rng = stream(self.seed, 0);
        (0..self.channels)
            .map(|_| {
                self.periods
                    .iter()
                    .map(|_| rng.gen_range(0.5..2.0))
                    .collect()
            })
            .collect()
    }

    /// Fundamental period of the deterministic part.
    pub fn fundamental_period(&self) -> u64 {
        self.periods.iter().fold(1, |acc, &p| lcm(acc, p))
    }
}

pub fn default_len(periods: &[u64]) -> usize {
    let l = periods.iter().fold(1u64, |acc, &p| lcm(acc, p));
    (20 * l as usize).clamp(MIN_DEFAULT_LEN, MAX_LEN)
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `X = Z + U` together with its two components.
#[derive(Debug, Clone)]
pub struct ComposeData {
    pub x: MultiSeries,
    pub z: MultiSeries,
    pub u: MultiSeries,
    pub amplitudes: Vec<Vec<f64>>,
}

pub fn generate_compose(spec: &ComposeSpec) -> Result<ComposeData> {
    spec.validate()?;
    let amplitudes = spec.resolved_amplitudes();
    let (len, channels) = (spec.len, spec.channels);

    let mut z = Array2::<f64>::zeros((len, channels));
    for (c, amps) in amplitudes.iter().enumerate() {
        for t in 0..len {
            z[[t, c]] = spec
                .periods
                .iter()
                .zip(amps)
                .map(|(&p, &a)| {
                    let phase = (t as u64 % p) as f64 / p as f64;
                    a * (2.0 * std::f64::consts::PI * phase).sin()
                })
                .sum();
        }
    }

    let mut u = Array2::<f64>::zeros((len, channels));
    for c in 0..channels {
        let mut rng = stream(spec.seed, c as u64 + 1);
        for t in 0..len {
            u[[t, c]] = spec.noise.sample(&mut rng);
        }
    }

    let x = &z + &u;
    Ok(ComposeData {
        x: MultiSeries::new(x)?,
        z: MultiSeries::new(z)?,
        u: MultiSeries::new(u)?,
        amplitudes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MaeMethod {
    ClosedForm,
    /// Non-integer Poisson intensity: MAE estimated from samples.
    MonteCarlo { samples: usize, std_error: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalMetrics {
    pub mse_opt: f64,
    pub mae_opt: f64,
    pub family: NoiseFamily,
    pub mae_method: MaeMethod,
}

pub const MONTE_CARLO_SAMPLES: usize = 1_000_000;

/// Closed-form optimal MSE and MAE for the noise model.
///
/// Gaussian: `(sigma^2, sqrt(2/pi) sigma)`. Poisson with integer `lambda`:
/// `(lambda, 2 e^-lambda sum_{k<lambda} (lambda - k) lambda^k / k!)`; other
/// `lambda` fall back to a seeded Monte-Carlo estimate of the MAE.
pub fn optimal_metrics(noise: &Noise) -> Result<OptimalMetrics> {
    noise.validate()?;
    Ok(match *noise {
        Noise::Gaussian { sigma, .. } => OptimalMetrics {
            mse_opt: sigma * sigma,
            mae_opt: (2.0 / std::f64::consts::PI).sqrt() * sigma,
            family: NoiseFamily::Gaussian,
            mae_method: MaeMethod::ClosedForm,
        },
        Noise::Poisson { lambda } if lambda.fract() == 0.0 => OptimalMetrics {
            mse_opt: lambda,
            mae_opt: poisson_mad(lambda as u64),
            family: NoiseFamily::Poisson,
            mae_method: MaeMethod::ClosedForm,
        },
        Noise::Poisson { lambda } => {
            let (mae, se) = monte_carlo_mad(noise, MONTE_CARLO_SAMPLES, 0x5eed);
            OptimalMetrics {
                mse_opt: lambda,
                mae_opt: mae,
                family: NoiseFamily::Poisson,
                mae_method: MaeMethod::MonteCarlo {
                    samples: MONTE_CARLO_SAMPLES,
                    std_error: se,
                    tolerance: 3.0 * se,
                },
            }
        }
    })
}

/// `E|X - lambda|` for `X ~ Poisson(lambda)`, integer `lambda`.
pub fn poisson_mad(lambda: u64) -> f64 {
    let l = lambda as f64;
    let mut term = 1.0; // lambda^k / k!
    let mut sum = 0.0;
    for k in 0..lambda {
        if k > 0 {
            term *= l / k as f64;
        }
        sum += (l - k as f64) * term;
    }
    2.0 * (-l).exp() * sum
}

/// Sample mean of `|U - E[U]|` and its standard error.
pub fn monte_carlo_mad(noise: &Noise, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, 0);
    let mean = noise.mean();
    let draws: Vec<f64> = (0..samples)
        .map(|_| (noise.sample(&mut rng) - mean).abs())
        .collect();
    mean_and_se(&draws)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub offset: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPredictionReport {
    pub samples: usize,
    pub expectation: f64,
    pub variance: f64,
    pub mse_at_expectation: f64,
    pub std_error: f64,
    /// Empirical MSE of the constant predictions `E[U] + offset`.
    pub grid: Vec<GridPoint>,
    pub expectation_is_best: bool,
    pub within_three_se: bool,
}

/// Empirically checks that the constant prediction `E[U]` minimizes MSE and
/// that its MSE matches `Var(U)` within three standard errors.
pub fn optimal_prediction_check(noise: &Noise, samples: usize, seed: u64) -> Result<OptimalPredictionReport> {
    noise.validate()?;
    if samples < 10_000 {
        return Err(MfrsError::validation(format!(
            "need at least 10000 samples, got {samples}"
        )));
    }
    let mut rng = stream(seed, 0);
    let draws: Vec<f64> = (0..samples).map(|_| noise.sample(&mut rng)).collect();
    let expectation = noise.mean();
    let variance = noise.variance();
    let sq: Vec<f64> = draws.iter().map(|u| (u - expectation).powi(2)).collect();
    let (mse_at_expectation, std_error) = mean_and_se(&sq);

    let scale = variance.sqrt().max(1e-3);
    let grid: Vec<GridPoint> = [-1.0, -0.5, -0.25, -0.1, 0.1, 0.25, 0.5, 1.0]
        .iter()
        .map(|&f| {
            let offset = f * scale;
            GridPoint {
                offset,
                mse: empirical_mse(&draws, expectation + offset),
            }
        })
        .collect();
    let expectation_is_best = grid.iter().all(|g| g.mse > mse_at_expectation);
    let within_three_se = (mse_at_expectation - variance).abs() <= 3.0 * std_error;
    Ok(OptimalPredictionReport {
        samples,
        expectation,
        variance,
        mse_at_expectation,
        std_error,
        grid,
        expectation_is_best,
        within_three_se,
    })
}

/// Mean squared error of predicting the constant `prediction`.
pub fn empirical_mse(draws: &[f64], prediction: f64) -> f64 {
    draws.iter().map(|u| (u - prediction).powi(2)).sum::<f64>() / draws.len() as f64
}

/// Constant prediction on `grid` with the lowest empirical MSE.
pub fn empirical_argmin(noise: &Noise, samples: usize, seed: u64, grid: &[f64]) -> Result<f64> {
    noise.validate()?;
    if grid.is_empty() {
        return Err(MfrsError::validation("empty grid"));
    }
    let mut rng = stream(seed, 0);
    let draws: Vec<f64> = (0..samples).map(|_| noise.sample(&mut rng)).collect();
    let mut best = (grid[0], f64::INFINITY);
    for &g in grid {
        let mse = empirical_mse(&draws, g);
        if mse < best.1 {
            best = (g, mse);
        }
    }
    Ok(best.0)
}

/// Manifest written next to generated Compose data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComposeManifest {
    pub version: u32,
    pub family: Option<Family>,
    pub spec: ComposeSpec,
    pub amplitudes: Vec<Vec<f64>>,
    pub optimal: OptimalMetrics,
    /// Set for compose4, whose published definition reads `U2 + U2`; it is
    /// generated as long-period `Z` plus Poisson noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl ComposeManifest {
    pub fn new(
        family: Option<Family>,
        spec: &ComposeSpec,
        data: &ComposeData,
        created_unix: Option<u64>,
    ) -> Result<Self> {
        let note = (family == Some(Family::Compose4)).then(|| {
            "compose4 is generated as long-period Z plus Poisson noise; the published definition reads U2 + U2".to_string()
        });
        Ok(Self {
            version: MANIFEST_VERSION,
            family,
            spec: spec.clone(),
            amplitudes: data.amplitudes.clone(),
            optimal: optimal_metrics(&spec.noise)?,
            note,
            created_unix,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::magnitude_spectrum;

    fn gaussian(sigma: f64) -> Noise {
        Noise::Gaussian { mu: 0.0, sigma }
    }

    #[test]
    fn noiseless_x_equals_z() {
        let spec = ComposeSpec::family(Family::Compose1, gaussian(0.0), 3).with_len(720);
        let data = generate_compose(&spec).unwrap();
        assert_eq!(data.x.values(), data.z.values());
    }

    #[test]
    fn x_minus_u_is_z_and_z_is_periodic() {
        let spec = ComposeSpec::family(Family::Compose1, gaussian(1.5), 9).with_len(1000);
        let data = generate_compose(&spec).unwrap();
        let x = data.x.values();
        let (z, u) = (data.z.values(), data.u.values());
        for t in 0..1000 {
            for c in 0..4 {
                assert_eq!(x[[t, c]], z[[t, c]] + u[[t, c]]);
                if t >= 72 {
                    assert_eq!(z[[t, c]], z[[t - 72, c]]);
                }
            }
        }
    }

    #[test]
    fn deterministic_spectrum_has_exactly_the_periods() {
        let spec = ComposeSpec::family(Family::Compose1, gaussian(0.0), 1).with_len(72 * 40);
        let data = generate_compose(&spec).unwrap();
        let spec_z = magnitude_spectrum(&data.z.channel(2)).unwrap();
        let expected: Vec<usize> = SHORT_PERIODS.iter().map(|&p| 2880 / p as usize).collect();
        let peak = spec_z.max_magnitude();
        for (bin, m) in spec_z.bins() {
            if expected.contains(&bin) {
                assert!(m > 0.1 * peak, "bin {bin}");
            } else {
                assert!(m < 1e-9 * peak, "bin {bin} leaks {m}");
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = ComposeSpec::family(Family::Compose3, Noise::Poisson { lambda: 2.0 }, 5).with_len(500);
        let a = generate_compose(&spec).unwrap();
        let b = generate_compose(&spec).unwrap();
        assert_eq!(a.x.values(), b.x.values());
        let other = ComposeSpec { seed: 6, ..spec };
        assert_ne!(generate_compose(&other).unwrap().x.values(), a.x.values());
    }

    #[test]
    fn poisson_sample_mean() {
        let noise = Noise::Poisson { lambda: 3.0 };
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| noise.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn poisson_inversion_edges() {
        assert_eq!(poisson_by_inversion(2.0, 0.0), 0);
        assert_eq!(poisson_by_inversion(2.0, (-2.0f64).exp()), 0);
        assert_eq!(poisson_by_inversion(2.0, (-2.0f64).exp() + 1e-12), 1);
    }

    #[test]
    fn gaussian_optimum() {
        let m = optimal_metrics(&gaussian(2.0)).unwrap();
        assert_eq!(m.mse_opt, 4.0);
        assert_eq!(format!("{:.3}", m.mae_opt), "1.596");
        assert_eq!(optimal_metrics(&gaussian(0.0)).unwrap().mse_opt, 0.0);
    }

    #[test]
    fn poisson_optimum() {
        let one = optimal_metrics(&Noise::Poisson { lambda: 1.0 }).unwrap();
        assert_eq!(one.mse_opt, 1.0);
        assert!((one.mae_opt - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let three = optimal_metrics(&Noise::Poisson { lambda: 3.0 }).unwrap();
        let by_hand = 2.0 * (-3.0f64).exp() * (3.0 * 1.0 + 2.0 * 3.0 + 1.0 * 9.0 / 2.0);
        assert!((three.mae_opt - by_hand).abs() < 1e-14);
        assert!((three.mae_opt - 27.0 * (-3.0f64).exp()).abs() < 1e-14);
        assert_eq!(format!("{:.3}", three.mae_opt), "1.344");
    }

    #[test]
    fn fractional_lambda_uses_monte_carlo() {
        let m = optimal_metrics(&Noise::Poisson { lambda: 2.5 }).unwrap();
        match m.mae_method {
            MaeMethod::MonteCarlo { samples, tolerance, .. } => {
                assert_eq!(samples, MONTE_CARLO_SAMPLES);
                assert!(tolerance > 0.0 && tolerance < 0.01);
            }
            MaeMethod::ClosedForm => panic!("expected monte carlo"),
        }
        // brute-force series sum for the same lambda
        let exact: f64 = (0..200)
            .scan(1.0f64, |term, k| {
                if k > 0 {
                    *term *= 2.5 / k as f64;
                }
                Some((k as f64 - 2.5).abs() * *term)
            })
            .sum::<f64>()
            * (-2.5f64).exp();
        assert!((m.mae_opt - exact).abs() < 0.01);
    }

    #[test]
    fn invalid_noise() {
        assert!(optimal_metrics(&gaussian(-1.0)).is_err());
        assert!(optimal_metrics(&Noise::Poisson { lambda: 0.0 }).is_err());
    }

    #[test]
    fn expectation_is_the_best_constant() {
        let r = optimal_prediction_check(&gaussian(1.0), 200_000, 1).unwrap();
        assert!(r.expectation_is_best && r.within_three_se);
        assert!((r.mse_at_expectation - 1.0).abs() < 0.02);
        let half = r.grid.iter().find(|g| (g.offset - 0.5).abs() < 1e-12).unwrap();
        assert!((half.mse - 1.25).abs() < 0.02);

        let p = optimal_prediction_check(&Noise::Poisson { lambda: 2.0 }, 200_000, 2).unwrap();
        assert!((p.mse_at_expectation - 2.0).abs() < 0.05);
        assert!(p.expectation_is_best);
        assert!(optimal_prediction_check(&gaussian(1.0), 100, 1).is_err());
    }

    #[test]
    fn monte_carlo_argmin_finds_the_mean() {
        let grid: Vec<f64> = (-40..=0).map(|i| i as f64 * 0.1).collect();
        let best = empirical_argmin(&Noise::Gaussian { mu: -2.0, sigma: 1.0 }, 100_000, 4, &grid).unwrap();
        assert!((best + 2.0).abs() <= 0.1 + 1e-12, "{best}");
    }

    #[test]
    fn default_lengths() {
        assert_eq!(default_len(&SHORT_PERIODS), 14_400);
        assert_eq!(default_len(&LONG_PERIODS), 14_400);
        assert_eq!(default_len(&[7, 11, 13]), 20_020);
        assert_eq!(default_len(&[997, 991]), 100_000);
    }
}
