//! Recovering the time step of an unlabeled observation window.
//!
//! The observation is slid along a stretch of training data one step at a
//! time; at each offset the Pearson correlations of the selected channels are
//! summed, and the best-scoring offset is the alignment `xi`.

use ndarray::{s, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};
use crate::series::MultiSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Best offset into the intercepted data (smallest on ties).
    pub xi: usize,
    /// Summed correlation at `xi`.
    pub score: f64,
    /// Summed correlation for every offset `0 .. T_M`.
    pub scores: Vec<f64>,
    /// Channels that actually contributed.
    pub channels_used: Vec<usize>,
}

/// Population Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MfrsError::validation(format!(
            "pearson inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(MfrsError::validation("pearson needs at least 2 samples"));
    }
    Ok(pearson_unchecked(a.iter().copied(), b.iter().copied(), a.len()))
}

fn pearson_unchecked(
    a: impl Iterator<Item = f64> + Clone,
    b: impl Iterator<Item = f64> + Clone,
    n: usize,
) -> f64 {
    let n = n as f64;
    let mean_a = a.clone().sum::<f64>() / n;
    let mean_b = b.clone().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    (cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0)
}

/// Scores every offset `t = 0 .. max_period` of `observation` (`S x C`)
/// against `intercepted[t .. t + S]`.
///
/// Observation channels with zero variance are skipped (with a warning); if
/// nothing is left the alignment fails.
pub fn align(
    observation: ArrayView2<'_, f64>,
    intercepted: ArrayView2<'_, f64>,
    max_period: usize,
    channels: &[usize],
) -> Result<AlignmentResult> {
    let (span, obs_channels) = observation.dim();
    if span < 2 {
        return Err(MfrsError::validation("observation needs at least 2 steps"));
    }
    if max_period < 1 {
        return Err(MfrsError::validation("max period must be >= 1"));
    }
    if intercepted.ncols() != obs_channels {
        return Err(MfrsError::Shape {
            what: "intercepted data channels",
            expected: obs_channels.to_string(),
            actual: intercepted.ncols().to_string(),
        });
    }
    if intercepted.nrows() < max_period + span {
        return Err(MfrsError::validation(format!(
            "intercepted data has {} rows, needs max_period + S = {}",
            intercepted.nrows(),
            max_period + span
        )));
    }
    if channels.is_empty() {
        return Err(MfrsError::validation("no channels selected for alignment"));
    }
    if let Some(&c) = channels.iter().find(|&&c| c >= obs_channels) {
        return Err(MfrsError::range(c, format!("alignment channel of {obs_channels}")));
    }

    let mut used = Vec::with_capacity(channels.len());
    for &c in channels {
        let col = observation.column(c);
        let mean = col.sum() / span as f64;
        if col.iter().all(|&v| v == mean) {
            log::warn!("alignment: observation channel {c} is constant, skipping it");
        } else {
            used.push(c);
        }
    }
    if used.is_empty() {
        return Err(MfrsError::Alignment(
            "every selected observation channel is constant".into(),
        ));
    }

    let scores: Vec<f64> = (0..max_period)
        .map(|t| {
            used.iter()
                .map(|&c| {
                    let obs = observation.column(c);
                    let win = intercepted.slice(s![t..t + span, c]);
                    pearson_unchecked(obs.iter().copied(), win.iter().copied(), span)
                })
                .sum()
        })
        .collect();

    let mut xi = 0;
    for (t, &p) in scores.iter().enumerate() {
        if p > scores[xi] {
            xi = t;
        }
    }
    Ok(AlignmentResult {
        xi,
        score: scores[xi],
        scores,
        channels_used: used,
    })
}

/// The final `max_period + span` rows of the training data, with the absolute
/// row index they start at.
pub fn intercept(train: &MultiSeries, max_period: usize, span: usize) -> Result<(MultiSeries, usize)> {
    let need = max_period + span;
    if train.len() < need {
        return Err(MfrsError::config(format!(
            "training data has {} rows, alignment needs {need}",
            train.len()
        )));
    }
    let origin = train.len() - need;
    Ok((train.rows(origin, train.len())?, origin))
}

/// Aligns an observation against the tail of the training data and returns
/// the result with `xi` translated to an absolute training-row index.
pub fn align_to_training(
    observation: ArrayView2<'_, f64>,
    train: &MultiSeries,
    max_period: usize,
    channels: &[usize],
) -> Result<(AlignmentResult, usize)> {
    let (tail, origin) = intercept(train, max_period, observation.nrows())?;
    let result = align(observation, tail.values(), max_period, channels)?;
    let absolute = origin + result.xi;
    Ok((result, absolute))
}
