//! Mini-batch training over stride-1 windows, with early stopping on a
//! validation split.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Example, ForecastModel};
use crate::error::{MfrsError, Result};
use crate::refseries::{slice_rs, ReferenceSeries};
use crate::series::MultiSeries;

/// Items per gradient chunk. Chunks may run on different threads; their
/// gradients are summed in chunk order so results do not depend on the
/// thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub patience: usize,
    /// Random subset of training windows visited per epoch; `None` visits all.
    pub max_windows_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            patience: 5,
            max_windows_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(MfrsError::config("epochs, batch size and patience must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(MfrsError::config("learning rate must be finite and >= 0"));
        }
        if self.max_windows_per_epoch == Some(0) {
            return Err(MfrsError::config("max_windows_per_epoch must be positive"));
        }
        Ok(())
    }
}

/// Training and validation segments with their absolute starting rows on the
/// reference-series timeline.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a MultiSeries,
    pub train_origin: usize,
    pub val: Option<(&'a MultiSeries, usize)>,
    pub rs: &'a ReferenceSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

/// Window source over one segment.
struct Windows<'a> {
    series: &'a MultiSeries,
    origin: usize,
    rs: &'a ReferenceSeries,
    lookback: usize,
    horizon: usize,
    rs_lookback: usize,
}

impl<'a> Windows<'a> {
    fn new(model: &ForecastModel, series: &'a MultiSeries, origin: usize, rs: &'a ReferenceSeries) -> Result<Self> {
        let cfg = model.config();
        let w = Self {
            series,
            origin,
            rs,
            lookback: cfg.lookback,
            horizon: cfg.horizon,
            rs_lookback: cfg.rs_lookback(),
        };
        if w.count() == 0 {
            return Err(MfrsError::config(format!(
                "segment of {} rows has no window of lookback {} + horizon {}",
                series.len(),
                w.lookback,
                w.horizon
            )));
        }
        let need = origin + w.count() - 1 + w.rs_lookback;
        if rs.len() < need {
            return Err(MfrsError::config(format!(
                "reference series has {} rows, windows need {need}",
                rs.len()
            )));
        }
        Ok(w)
    }

    fn count(&self) -> usize {
        (self.series.len() + 1).saturating_sub(self.lookback + self.horizon)
    }

    fn rs_block(&self, w: usize) -> ndarray::ArrayView2<'a, f64> {
        let a = self.origin + w;
        self.rs.values().slice_move(s![a..a + self.rs_lookback, ..])
    }

    fn example(&self, w: usize) -> (Example<'a>, ndarray::ArrayView2<'a, f64>) {
        let v = self.series.values();
        let ex = Example {
            lookback: v.slice_move(s![w..w + self.lookback, ..]),
            rs: self.rs_block(w),
        };
        let target = self
            .series
            .values()
            .slice_move(s![w + self.lookback..w + self.lookback + self.horizon, ..]);
        (ex, target)
    }
}

/// Sum of squared errors over `windows`, chunked like training.
fn sse(model: &ForecastModel, src: &Windows<'_>, windows: &[usize]) -> Result<f64> {
    let parts: Vec<Result<f64>> = windows
        .par_chunks(CHUNK * 4)
        .map(|chunk| {
            let (ex, targets): (Vec<_>, Vec<_>) = chunk.iter().map(|&w| src.example(w)).unzip();
            let (preds, _) = model.forward_batch(&ex)?;
            Ok(preds
                .iter()
                .zip(&targets)
                .map(|(p, t)| (p - t).mapv(|e| e * e).sum())
                .sum())
        })
        .collect();
    parts.into_iter().sum()
}

fn mean_loss(model: &ForecastModel, src: &Windows<'_>) -> Result<f64> {
    let all: Vec<usize> = (0..src.count()).collect();
    let denom = (all.len() * src.horizon * src.series.channels()) as f64;
    Ok(sse(model, src, &all)? / denom)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &ForecastModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.flat_params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, model: &mut ForecastModel, grad: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let mut i = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        model.visit_mut(&mut |_, p| {
            for (j, x) in p.iter_mut().enumerate() {
                let g = grad[i][j];
                m[i][j] = Self::B1 * m[i][j] + (1.0 - Self::B1) * g;
                v[i][j] = Self::B2 * v[i][j] + (1.0 - Self::B2) * g * g;
                *x -= lr * (m[i][j] / c1) / ((v[i][j] / c2).sqrt() + Self::EPS);
            }
            i += 1;
        });
    }
}

/// Batch gradient of the mean squared error and the batch loss.
fn batch_gradient(model: &ForecastModel, src: &Windows<'_>, batch: &[usize]) -> Result<(f64, ForecastModel)> {
    let denom = (batch.len() * src.horizon * src.series.channels()) as f64;
    let parts: Vec<Result<(f64, ForecastModel)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (ex, targets): (Vec<_>, Vec<_>) = chunk.iter().map(|&w| src.example(w)).unzip();
            let (preds, cache) = model.forward_batch(&ex)?;
            let mut loss = 0.0;
            let d: Vec<Array2<f64>> = preds
                .iter()
                .zip(&targets)
                .map(|(p, t)| {
                    let diff = p - t;
                    loss += diff.mapv(|e| e * e).sum();
                    diff * (2.0 / denom)
                })
                .collect();
            Ok((loss, model.backward(&cache, &d)?))
        })
        .collect();
    let mut total = 0.0;
    let mut grad: Option<ForecastModel> = None;
    for part in parts {
        let (l, g) = part?;
        total += l;
        match &mut grad {
            None => grad = Some(g),
            Some(acc) => acc.add_scaled(&g, 1.0),
        }
    }
    Ok((total / denom, grad.expect("non-empty batch")))
}

/// Trains `model` in place. With a validation split the parameters of the
/// best validation epoch are restored at the end.
pub fn train(model: &mut ForecastModel, data: TrainData<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let train_src = Windows::new(model, data.train, data.train_origin, data.rs)?;
    let val_src = data
        .val
        .map(|(series, origin)| Windows::new(model, series, origin, data.rs))
        .transpose()?;
    for series in std::iter::once(data.train).chain(data.val.map(|v| v.0)) {
        if series.channels() != data.train.channels() {
            return Err(MfrsError::validation("training and validation channel counts differ"));
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..train_src.count()).collect();
    let per_epoch = cfg.max_windows_per_epoch.unwrap_or(order.len()).min(order.len());

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ForecastModel)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for batch in order[..per_epoch].chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(model, &train_src, batch)?;
            let grad = grad.flat_params();
            match cfg.optimizer {
                OptimizerKind::Adam => adam.update(model, &grad, cfg.learning_rate),
                OptimizerKind::Sgd => {
                    let mut i = 0;
                    model.visit_mut(&mut |_, p| {
                        for (x, g) in p.iter_mut().zip(&grad[i]) {
                            *x -= cfg.learning_rate * g;
                        }
                        i += 1;
                    });
                }
            }
            if let Some(name) = model.first_non_finite() {
                return Err(MfrsError::Numeric {
                    param: name,
                    detail: format!("non-finite parameter after update in epoch {epoch}, batch {batches}"),
                });
            }
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = val_src.as_ref().map(|v| mean_loss(model, v)).transpose()?;
        log::info!(
            "epoch {epoch}: train {train_loss:.6}{}",
            val_loss.map(|v| format!(", val {v:.6}")).unwrap_or_default()
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }

    let (best_epoch, best_val_loss) = match best {
        Some((v, e, params)) => {
            *model = params;
            (e, Some(v))
        }
        None => (history.len(), None),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// Forecast from an aligned observation: the reference block starts at `xi`.
pub fn predict(
    model: &ForecastModel,
    observation: ndarray::ArrayView2<'_, f64>,
    rs: &ReferenceSeries,
    xi: usize,
) -> Result<Array2<f64>> {
    let block = slice_rs(rs, xi, model.config().rs_lookback())?;
    model.forward(observation.view(), block.view())
}
