//! Error metrics over stride-1 test windows, naive baselines, the channel
//! independence harness and a small SVG plot.

use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};
use crate::forecaster::{Example, ForecastModel};
use crate::refseries::ReferenceSeries;
use crate::series::MultiSeries;
use crate::synthbench::OptimalMetrics;

/// Anything that maps an `S x C` lookback block to a `T x C` forecast.
///
/// `start` is the absolute row of the block's first step on the dataset
/// timeline; forecasters without a notion of time ignore it.
pub trait Forecaster: Sync {
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    fn forecast(&self, block: ArrayView2<'_, f64>, start: usize) -> Result<Array2<f64>>;

    fn forecast_batch(&self, blocks: &[(ArrayView2<'_, f64>, usize)]) -> Result<Vec<Array2<f64>>> {
        blocks.iter().map(|(b, s)| self.forecast(b.view(), *s)).collect()
    }
}

/// A trained model paired with the reference bank it was trained against.
#[derive(Debug, Clone, Copy)]
pub struct ModelForecaster<'a> {
    pub model: &'a ForecastModel,
    pub rs: &'a ReferenceSeries,
}

impl ModelForecaster<'_> {
    fn rs_block(&self, start: usize) -> Result<ArrayView2<'_, f64>> {
        let p = self.model.config().rs_lookback();
        if start + p > self.rs.len() {
            return Err(MfrsError::range(
                start,
                format!("reference block {start}+{p} exceeds bank length {}", self.rs.len()),
            ));
        }
        Ok(self.rs.values().slice_move(s![start..start + p, ..]))
    }
}

impl Forecaster for ModelForecaster<'_> {
    fn lookback(&self) -> usize {
        self.model.config().lookback
    }

    fn horizon(&self) -> usize {
        self.model.config().horizon
    }

    fn forecast(&self, block: ArrayView2<'_, f64>, start: usize) -> Result<Array2<f64>> {
        let rs = self.rs_block(start)?;
        let (mut out, _) = self.model.forward_batch(&[Example { lookback: block.view(), rs: rs.view() }])?;
        Ok(out.pop().expect("one example"))
    }

    fn forecast_batch(&self, blocks: &[(ArrayView2<'_, f64>, usize)]) -> Result<Vec<Array2<f64>>> {
        let examples = blocks
            .iter()
            .map(|(b, s)| Ok(Example { lookback: b.view(), rs: self.rs_block(*s)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.model.forward_batch(&examples)?.0)
    }
}

/// Repeats the last observed value over the horizon.
#[derive(Debug, Clone, Copy)]
pub struct RepeatLast {
    pub lookback: usize,
    pub horizon: usize,
}

impl Forecaster for RepeatLast {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, block: ArrayView2<'_, f64>, _start: usize) -> Result<Array2<f64>> {
        let last = block.row(block.nrows() - 1);
        Ok(Array2::from_shape_fn((self.horizon, block.ncols()), |(_, c)| last[c]))
    }
}

/// Copies the last `lag` steps forward cyclically.
#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    pub lookback: usize,
    pub horizon: usize,
    pub lag: usize,
}

impl SeasonalNaive {
    pub fn new(lookback: usize, horizon: usize, lag: usize) -> Result<Self> {
        if lag == 0 || lag > lookback {
            return Err(MfrsError::config(format!(
                "seasonal lag {lag} must be in 1..=lookback ({lookback})"
            )));
        }
        Ok(Self { lookback, horizon, lag })
    }
}

impl Forecaster for SeasonalNaive {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, block: ArrayView2<'_, f64>, _start: usize) -> Result<Array2<f64>> {
        let base = block.nrows() - self.lag;
        Ok(Array2::from_shape_fn((self.horizon, block.ncols()), |(t, c)| {
            block[[base + t % self.lag, c]]
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
    pub per_horizon: Option<Vec<HorizonError>>,
    pub optimal: Option<OptimalMetrics>,
    /// `mse / mse_opt`; absent when there is no optimum or it is zero.
    pub gap_ratio: Option<f64>,
}

impl EvalReport {
    pub fn with_optimal(mut self, optimal: OptimalMetrics) -> Self {
        self.gap_ratio = (optimal.mse_opt > 0.0).then(|| self.mse / optimal.mse_opt);
        self.optimal = Some(optimal);
        self
    }
}

const EVAL_CHUNK: usize = 64;

/// Averages squared and absolute error over every stride-1 window of `test`,
/// all horizons and all channels. `origin` is the absolute row of `test[0]`.
pub fn evaluate(forecaster: &dyn Forecaster, test: &MultiSeries, origin: usize) -> Result<EvalReport> {
    let (s_len, t_len) = (forecaster.lookback(), forecaster.horizon());
    let windows = (test.len() + 1).saturating_sub(s_len + t_len);
    if windows == 0 {
        return Err(MfrsError::config(format!(
            "test segment of {} rows has no window of lookback {s_len} + horizon {t_len}",
            test.len()
        )));
    }
    let values = test.values();
    let starts: Vec<usize> = (0..windows).collect();
    // per chunk: (squared, absolute) sums by horizon step
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = starts
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let blocks: Vec<_> = chunk
                .iter()
                .map(|&w| (values.slice(s![w..w + s_len, ..]), origin + w))
                .collect();
            let preds = forecaster.forecast_batch(&blocks)?;
            let mut sq = vec![0.0; t_len];
            let mut ab = vec![0.0; t_len];
            for (&w, p) in chunk.iter().zip(&preds) {
                if p.dim() != (t_len, test.channels()) {
                    return Err(MfrsError::Shape {
                        what: "forecast",
                        expected: format!("{t_len} x {}", test.channels()),
                        actual: format!("{} x {}", p.nrows(), p.ncols()),
                    });
                }
                let target = values.slice(s![w + s_len..w + s_len + t_len, ..]);
                for (((t, _), &a), &b) in p.indexed_iter().zip(target.iter()) {
                    let e = a - b;
                    sq[t] += e * e;
                    ab[t] += e.abs();
                }
            }
            Ok((sq, ab))
        })
        .collect();

    let mut sq = vec![0.0; t_len];
    let mut ab = vec![0.0; t_len];
    for part in parts {
        let (s_part, a_part) = part?;
        for t in 0..t_len {
            sq[t] += s_part[t];
            ab[t] += a_part[t];
        }
    }
    let per_step = (windows * test.channels()) as f64;
    let per_horizon: Vec<HorizonError> = sq
        .iter()
        .zip(&ab)
        .map(|(s, a)| HorizonError {
            mse: s / per_step,
            mae: a / per_step,
        })
        .collect();
    let total = per_step * t_len as f64;
    Ok(EvalReport {
        mse: sq.iter().sum::<f64>() / total,
        mae: ab.iter().sum::<f64>() / total,
        windows,
        per_horizon: Some(per_horizon),
        optimal: None,
        gap_ratio: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: String,
    pub report: Option<EvalReport>,
    /// Why the baseline was not run.
    pub skipped: Option<String>,
}

/// Repeat-last and seasonal-naive (lag = `season`, usually the largest
/// primary period). Seasonal-naive is skipped when the lag exceeds `S`.
pub fn naive_baselines(
    test: &MultiSeries,
    origin: usize,
    lookback: usize,
    horizon: usize,
    season: Option<u64>,
) -> Result<Vec<BaselineResult>> {
    let mut out = vec![BaselineResult {
        name: "repeat_last".into(),
        report: Some(evaluate(&RepeatLast { lookback, horizon }, test, origin)?),
        skipped: None,
    }];
    let seasonal = match season {
        None => BaselineResult {
            name: "seasonal_naive".into(),
            report: None,
            skipped: Some("no seasonal lag available".into()),
        },
        Some(lag) if lag as usize > lookback => {
            let notice = format!("lag {lag} exceeds lookback {lookback}");
            log::warn!("seasonal-naive skipped: {notice}");
            BaselineResult {
                name: "seasonal_naive".into(),
                report: None,
                skipped: Some(notice),
            }
        }
        Some(lag) => BaselineResult {
            name: "seasonal_naive".into(),
            report: Some(evaluate(
                &SeasonalNaive::new(lookback, horizon, lag as usize)?,
                test,
                origin,
            )?),
            skipped: None,
        },
    };
    out.push(seasonal);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub max_deviation: f64,
    pub passed: bool,
}

pub const INDEPENDENCE_TOLERANCE: f64 = 1e-9;

/// Compares one joint forecast of all channels with the forecasts of each
/// channel on its own.
pub fn channel_independence_test(
    forecaster: &dyn Forecaster,
    block: ArrayView2<'_, f64>,
    start: usize,
) -> Result<IndependenceReport> {
    if block.ncols() < 2 {
        return Err(MfrsError::validation("channel independence needs at least 2 channels"));
    }
    let joint = forecaster.forecast(block, start)?;
    let mut max_deviation: f64 = 0.0;
    for c in 0..block.ncols() {
        let single = forecaster.forecast(block.slice(s![.., c..c + 1]), start)?;
        for t in 0..joint.nrows() {
            max_deviation = max_deviation.max((joint[[t, c]] - single[[t, 0]]).abs());
        }
    }
    Ok(IndependenceReport {
        max_deviation,
        passed: max_deviation < INDEPENDENCE_TOLERANCE,
    })
}

/// Line plot of lookback, target and prediction for one channel.
pub fn plot_svg(
    lookback: &[f64],
    target: &[f64],
    prediction: &[f64],
    title: &str,
) -> String {
    let (w, h, pad) = (800.0, 300.0, 30.0);
    let n = lookback.len() + target.len().max(prediction.len());
    let all = lookback.iter().chain(target).chain(prediction);
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;
    let path = |offset: usize, vals: &[f64]| {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(offset + i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{pad}" y="20" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="gray" points="{}"/>"#, path(0, lookback));
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="black" points="{}"/>"#, path(lookback.len(), target));
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="crimson" points="{}"/>"#, path(lookback.len(), prediction));
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
