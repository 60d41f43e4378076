//! Cross-attention forecaster between variate tokens and reference-series
//! tokens, trained with a hand-written reverse-mode engine.

mod checkpoint;
mod layers;
mod model;
mod train;

pub use checkpoint::{Checkpoint, TensorEntry, CHECKPOINT_VERSION};
pub use layers::{gelu, gelu_grad, softmax_rows, LayerNorm, Linear};
pub use model::{Block, Example, ForecastModel, ForwardCache};
pub use train::{predict, train, EpochRecord, OptimizerKind, TrainConfig, TrainData, TrainReport};

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: usize,
    /// Reference lookback `P`; `None` means the same as `lookback`.
    pub rs_lookback: Option<usize>,
    pub blocks: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub shared_embedding: bool,
    pub epsilon_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            hidden: 64,
            rs_lookback: None,
            blocks: 1,
            heads: 1,
            ffn_mult: 4,
            shared_embedding: true,
            epsilon_norm: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        Self {
            lookback,
            horizon,
            ..Self::default()
        }
    }

    pub fn rs_lookback(&self) -> usize {
        self.rs_lookback.unwrap_or(self.lookback)
    }

    /// True when reference tokens reuse the variate embedding.
    pub fn shares_embedding(&self) -> bool {
        self.shared_embedding && self.rs_lookback() == self.lookback
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_mult * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback < 2 {
            return Err(MfrsError::config("lookback must be >= 2"));
        }
        if self.horizon < 1 {
            return Err(MfrsError::config("horizon must be >= 1"));
        }
        if self.hidden < 1 {
            return Err(MfrsError::config("hidden size must be >= 1"));
        }
        if self.rs_lookback() < 1 {
            return Err(MfrsError::config("reference lookback must be >= 1"));
        }
        if self.blocks < 1 || self.heads < 1 || self.ffn_mult < 1 {
            return Err(MfrsError::config("blocks, heads and ffn_mult must be >= 1"));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(MfrsError::config(format!(
                "heads ({}) must divide hidden size ({})",
                self.heads, self.hidden
            )));
        }
        if !(self.epsilon_norm > 0.0 && self.epsilon_norm.is_finite()) {
            return Err(MfrsError::config("epsilon_norm must be a small positive number"));
        }
        Ok(())
    }
}

/// Standardizes a vector with its own mean and population variance.
/// Returns `(xn, mean, var)`.
pub fn normalize_instance(x: ArrayView1<'_, f64>, eps: f64) -> (Vec<f64>, f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let denom = (var + eps).sqrt();
    (x.iter().map(|v| (v - mean) / denom).collect(), mean, var)
}

/// Column-wise [`normalize_instance`]; returns the standardized matrix and
/// `(mean, var)` per column.
pub fn normalize_columns(x: ArrayView2<'_, f64>, eps: f64) -> (Array2<f64>, Vec<(f64, f64)>) {
    let mut out = Array2::zeros(x.raw_dim());
    let mut stats = Vec::with_capacity(x.ncols());
    for (c, col) in x.columns().into_iter().enumerate() {
        let (xn, mean, var) = normalize_instance(col, eps);
        out.column_mut(c).assign(&ArrayView1::from(&xn));
        stats.push((mean, var));
    }
    (out, stats)
}

fn check_same_shape(prediction: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if prediction.dim() != target.dim() {
        return Err(MfrsError::Shape {
            what: "prediction vs target",
            expected: format!("{} x {}", target.nrows(), target.ncols()),
            actual: format!("{} x {}", prediction.nrows(), prediction.ncols()),
        });
    }
    Ok(())
}

/// Mean squared error over every entry.
pub fn loss_mse(prediction: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(prediction, target)?;
    let n = prediction.len() as f64;
    Ok(prediction
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n)
}

/// Mean absolute error over every entry.
pub fn loss_mae(prediction: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_same_shape(prediction, target)?;
    let n = prediction.len() as f64;
    Ok(prediction
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s, Array1, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-2.0..2.0))
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            lookback: 8,
            horizon: 4,
            hidden: 6,
            blocks: 1,
            heads: 1,
            ffn_mult: 2,
            epsilon_norm: 1e-5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn normalize_examples() {
        let (xn, mean, var) = normalize_instance(array![3.0, 3.0, 3.0].view(), 1e-5);
        assert_eq!((mean, var), (3.0, 0.0));
        assert!(xn.iter().all(|&v| v == 0.0));

        let (xn, mean, var) = normalize_instance(array![0.0, 2.0].view(), 1e-5);
        assert_eq!((mean, var), (1.0, 1.0));
        assert!((xn[0] + 1.0).abs() < 1e-5 && (xn[1] - 1.0).abs() < 1e-5);

        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = Array1::from_shape_simple_fn(200, || rng.gen_range(-10.0..30.0));
        let eps = 1e-5;
        let (xn, _, _) = normalize_instance(x.view(), eps);
        let m = xn.iter().sum::<f64>() / 200.0;
        let v = xn.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 200.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 10.0 * eps);
    }

    #[test]
    fn loss_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(loss_mse(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(
            loss_mse(Array2::zeros((3, 2)).view(), Array2::ones((3, 2)).view()).unwrap(),
            1.0
        );
        assert_eq!(
            loss_mse(array![[1.0], [2.0]].view(), array![[0.0], [0.0]].view()).unwrap(),
            2.5
        );
        assert!(loss_mse(a.view(), array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad_heads = ModelConfig {
            hidden: 10,
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad_heads.validate().is_err());
        assert!(ModelConfig { blocks: 0, ..ModelConfig::default() }.validate().is_err());
        let separate = ModelConfig {
            rs_lookback: Some(48),
            ..ModelConfig::default()
        };
        assert!(!separate.shares_embedding());
        let m = ForecastModel::new(separate, 0).unwrap();
        assert_eq!(m.rs_embed.as_ref().unwrap().w.dim(), (48, 64));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = ForecastModel::new(tiny_config(), 1).unwrap();
        let err = m
            .forward(Array2::zeros((7, 2)).view(), Array2::zeros((8, 2)).view())
            .unwrap_err();
        assert!(matches!(err, MfrsError::Shape { .. }), "{err}");
    }

    #[test]
    fn zero_projection_predicts_lookback_mean() {
        let mut m = ForecastModel::new(tiny_config(), 2).unwrap();
        m.projection.w.fill(0.0);
        m.projection.b.fill(0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = random_matrix(8, 3, &mut rng);
        let rs = random_matrix(8, 2, &mut rng);
        let y = m.forward(x.view(), rs.view()).unwrap();
        let means = x.mean_axis(Axis(0)).unwrap();
        for t in 0..4 {
            for c in 0..3 {
                assert!((y[[t, c]] - means[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_permutation_and_independence() {
        let cfg = ModelConfig {
            blocks: 2,
            heads: 2,
            ..tiny_config()
        };
        let m = ForecastModel::new(cfg, 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = random_matrix(8, 3, &mut rng);
        let rs = random_matrix(8, 2, &mut rng);
        let y = m.forward(x.view(), rs.view()).unwrap();

        let perm = [2, 0, 1];
        let xp = x.select(Axis(1), &perm);
        let yp = m.forward(xp.view(), rs.view()).unwrap();
        for (j, &c) in perm.iter().enumerate() {
            for t in 0..4 {
                assert!((yp[[t, j]] - y[[t, c]]).abs() < 1e-12);
            }
        }
        for c in 0..3 {
            let yc = m.forward(x.slice(s![.., c..c + 1]), rs.view()).unwrap();
            for t in 0..4 {
                assert!((yc[[t, 0]] - y[[t, c]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = ModelConfig {
            hidden: 8,
            heads: 2,
            blocks: 2,
            ..tiny_config()
        };
        let m = ForecastModel::new(cfg, 7).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = random_matrix(8, 3, &mut rng);
        let rs = random_matrix(8, 5, &mut rng);
        let (_, cache) = m
            .forward_batch(&[Example { lookback: x.view(), rs: rs.view() }])
            .unwrap();
        for b in 0..2 {
            let maps = cache.attention(b);
            assert_eq!(maps.len(), 2);
            for a in maps {
                assert_eq!(a.dim(), (3, 5));
                for row in a.rows() {
                    assert!(row.iter().all(|&p| p >= 0.0));
                    assert!((row.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn affine_equivariance() {
        let cfg = ModelConfig {
            epsilon_norm: 1e-12,
            ..tiny_config()
        };
        let m = ForecastModel::new(cfg, 4).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let x = random_matrix(8, 2, &mut rng);
        let rs = random_matrix(8, 2, &mut rng);
        let y = m.forward(x.view(), rs.view()).unwrap();
        let (alpha, beta) = (3.5, -7.25);
        let ys = m.forward(x.mapv(|v| alpha * v + beta).view(), rs.view()).unwrap();
        for (a, b) in y.iter().zip(ys.iter()) {
            assert!((alpha * a + beta - b).abs() < 1e-9, "{a} {b}");
        }
    }

    fn batch_loss(m: &ForecastModel, xs: &[Array2<f64>], rs: &[Array2<f64>], ys: &[Array2<f64>]) -> f64 {
        let ex: Vec<Example> = xs
            .iter()
            .zip(rs)
            .map(|(x, r)| Example { lookback: x.view(), rs: r.view() })
            .collect();
        let (preds, _) = m.forward_batch(&ex).unwrap();
        let n = (ys.len() * ys[0].len()) as f64;
        preds
            .iter()
            .zip(ys)
            .map(|(p, y)| (p - y).mapv(|v| v * v).sum())
            .sum::<f64>()
            / n
    }

    fn analytic_grad(m: &ForecastModel, xs: &[Array2<f64>], rs: &[Array2<f64>], ys: &[Array2<f64>]) -> ForecastModel {
        let ex: Vec<Example> = xs
            .iter()
            .zip(rs)
            .map(|(x, r)| Example { lookback: x.view(), rs: r.view() })
            .collect();
        let (preds, cache) = m.forward_batch(&ex).unwrap();
        let n = (ys.len() * ys[0].len()) as f64;
        let d: Vec<Array2<f64>> = preds.iter().zip(ys).map(|(p, y)| (p - y) * (2.0 / n)).collect();
        m.backward(&cache, &d).unwrap()
    }

    fn gradient_check(cfg: ModelConfig, channels: usize, n_rs: usize, items: usize) {
        let m = ForecastModel::new(cfg.clone(), 13).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let xs: Vec<_> = (0..items).map(|_| random_matrix(cfg.lookback, channels, &mut rng)).collect();
        let rs: Vec<_> = (0..items).map(|_| random_matrix(cfg.rs_lookback(), n_rs, &mut rng)).collect();
        let ys: Vec<_> = (0..items).map(|_| random_matrix(cfg.horizon, channels, &mut rng)).collect();
        let grad = analytic_grad(&m, &xs, &rs, &ys).flat_params();
        let names: Vec<String> = m.param_shapes().into_iter().map(|(n, _)| n).collect();

        let h = 1e-5;
        for (ti, name) in names.iter().enumerate() {
            let len = grad[ti].len();
            for j in 0..len {
                let probe = |delta: f64| {
                    let mut mm = m.clone();
                    let mut idx = 0;
                    mm.visit_mut(&mut |_, v| {
                        if idx == ti {
                            v[j] += delta;
                        }
                        idx += 1;
                    });
                    batch_loss(&mm, &xs, &rs, &ys)
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let an = grad[ti][j];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{j}]: analytic {an} vs numeric {fd} (rel {rel})");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = ModelConfig {
            ffn_mult: 4,
            ..tiny_config()
        };
        gradient_check(cfg, 2, 2, 1);
    }

    #[test]
    fn gradients_match_finite_differences_multihead_batched() {
        let cfg = ModelConfig {
            hidden: 4,
            heads: 2,
            blocks: 2,
            ffn_mult: 2,
            rs_lookback: Some(6),
            ..tiny_config()
        };
        gradient_check(cfg, 2, 3, 2);
    }

    #[test]
    fn gradients_scale_with_loss_and_vanish_at_zero_loss() {
        let m = ForecastModel::new(tiny_config(), 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let x = random_matrix(8, 2, &mut rng);
        let rs = random_matrix(8, 2, &mut rng);
        let ex = [Example { lookback: x.view(), rs: rs.view() }];
        let (preds, cache) = m.forward_batch(&ex).unwrap();

        let zero = m.backward(&cache, &[Array2::zeros((4, 2))]).unwrap();
        assert!(zero.flat_params().iter().flatten().all(|&g| g == 0.0));

        let d = random_matrix(4, 2, &mut rng);
        let g1 = m.backward(&cache, std::slice::from_ref(&d)).unwrap().flat_params();
        let g3 = m.backward(&cache, &[d * 4.0]).unwrap().flat_params();
        for (a, b) in g1.iter().flatten().zip(g3.iter().flatten()) {
            assert_eq!(4.0 * a, *b);
        }
        assert_eq!(preds.len(), 1);
    }
}
