//! Inverted-encoder cross-attention model: forward pass, reverse-mode
//! gradients and parameter bookkeeping.
//!
//! Every variate (channel) and every reference series is one token. Variate
//! tokens are queries, reference tokens are keys and values; no attention runs
//! between variates, so channels are processed independently.

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::layers::{gelu, gelu_grad, softmax_rows, LayerNorm, LayerNormCache, Linear};
use super::{normalize_columns, ModelConfig};
use crate::error::{MfrsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: LayerNorm,
}

impl Block {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha20Rng) -> Self {
        let d = cfg.hidden;
        let f = cfg.ffn_hidden();
        Self {
            query: Linear::init(d, d, rng),
            key: Linear::init(d, d, rng),
            value: Linear::init(d, d, rng),
            output: Linear::init(d, d, rng),
            norm1: LayerNorm::new(d),
            ffn_in: Linear::init(d, f, rng),
            ffn_out: Linear::init(f, d, rng),
            norm2: LayerNorm::new(d),
        }
    }

    fn zeros_like(&self) -> Self {
        let d = self.norm1.gamma.len();
        Self {
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            norm1: LayerNorm::zeros(d),
            ffn_in: self.ffn_in.zeros_like(),
            ffn_out: self.ffn_out.zeros_like(),
            norm2: LayerNorm::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    config: ModelConfig,
    pub variate_embed: Linear,
    /// `None` when the reference series share the variate embedding.
    pub rs_embed: Option<Linear>,
    pub blocks: Vec<Block>,
    pub projection: Linear,
}

/// One forecasting example: an `S x C` lookback block and the `P x N`
/// reference block aligned with it.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub lookback: ArrayView2<'a, f64>,
    pub rs: ArrayView2<'a, f64>,
}

struct BlockCache {
    h_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    // per item, per head: C x N
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln1: LayerNormCache,
    h1: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
    ln2: LayerNormCache,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    batch: usize,
    channels: usize,
    n_rs: usize,
    xn: Array2<f64>,
    rn: Array2<f64>,
    hr: Array2<f64>,
    blocks: Vec<BlockCache>,
    h_out: Array2<f64>,
    scale: Vec<f64>,
}

impl ForwardCache {
    /// Attention maps of block `block`, indexed `[item * heads + head]`.
    pub fn attention(&self, block: usize) -> &[Array2<f64>] {
        &self.blocks[block].attn
    }
}

impl ForecastModel {
    /// Freshly initialized model; every draw comes from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let variate_embed = Linear::init(config.lookback, config.hidden, &mut rng);
        let rs_embed = (!config.shares_embedding())
            .then(|| Linear::init(config.rs_lookback(), config.hidden, &mut rng));
        let blocks = (0..config.blocks).map(|_| Block::init(&config, &mut rng)).collect();
        let projection = Linear::init(config.hidden, config.horizon, &mut rng);
        Ok(Self {
            config,
            variate_embed,
            rs_embed,
            blocks,
            projection,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// A structurally identical model with every parameter zero; used as a
    /// gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            variate_embed: self.variate_embed.zeros_like(),
            rs_embed: self.rs_embed.as_ref().map(Linear::zeros_like),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            projection: self.projection.zeros_like(),
        }
    }

    fn rs_embedding(&self) -> &Linear {
        self.rs_embed.as_ref().unwrap_or(&self.variate_embed)
    }

    /// Visits every parameter tensor as `(name, shape, values)` in a fixed
    /// order.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let mut linear = |name: &str, l: &Linear| {
            f(&format!("{name}.w"), l.w.shape(), l.w.as_slice().expect("standard layout"));
            f(&format!("{name}.b"), l.b.shape(), l.b.as_slice().expect("standard layout"));
        };
        linear("variate_embed", &self.variate_embed);
        if let Some(rs) = &self.rs_embed {
            linear("rs_embed", rs);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            linear(&format!("blocks.{i}.query"), &b.query);
            linear(&format!("blocks.{i}.key"), &b.key);
            linear(&format!("blocks.{i}.value"), &b.value);
            linear(&format!("blocks.{i}.output"), &b.output);
            linear(&format!("blocks.{i}.ffn_in"), &b.ffn_in);
            linear(&format!("blocks.{i}.ffn_out"), &b.ffn_out);
        }
        linear("projection", &self.projection);
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, ln) in [("norm1", &b.norm1), ("norm2", &b.norm2)] {
                f(&format!("blocks.{i}.{name}.gamma"), ln.gamma.shape(), ln.gamma.as_slice().expect("standard layout"));
                f(&format!("blocks.{i}.{name}.beta"), ln.beta.shape(), ln.beta.as_slice().expect("standard layout"));
            }
        }
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        let mut linear = |name: &str, l: &mut Linear| {
            f(&format!("{name}.w"), l.w.as_slice_mut().expect("standard layout"));
            f(&format!("{name}.b"), l.b.as_slice_mut().expect("standard layout"));
        };
        linear("variate_embed", &mut self.variate_embed);
        if let Some(rs) = &mut self.rs_embed {
            linear("rs_embed", rs);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            linear(&format!("blocks.{i}.query"), &mut b.query);
            linear(&format!("blocks.{i}.key"), &mut b.key);
            linear(&format!("blocks.{i}.value"), &mut b.value);
            linear(&format!("blocks.{i}.output"), &mut b.output);
            linear(&format!("blocks.{i}.ffn_in"), &mut b.ffn_in);
            linear(&format!("blocks.{i}.ffn_out"), &mut b.ffn_out);
        }
        linear("projection", &mut self.projection);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, ln) in [("norm1", &mut b.norm1), ("norm2", &mut b.norm2)] {
                f(&format!("blocks.{i}.{name}.gamma"), ln.gamma.as_slice_mut().expect("standard layout"));
                f(&format!("blocks.{i}.{name}.beta"), ln.beta.as_slice_mut().expect("standard layout"));
            }
        }
    }

    /// `(name, shape)` of every tensor in visiting order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, _| out.push((name.to_string(), shape.to_vec())));
        out
    }

    /// All parameters flattened in visiting order.
    pub fn flat_params(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit(&mut |_, _, v| out.push(v.to_vec()));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, v| n += v.len());
        n
    }

    /// Adds `scale * other` to every parameter.
    pub fn add_scaled(&mut self, other: &ForecastModel, scale: f64) {
        let flat = other.flat_params();
        let mut i = 0;
        self.visit_mut(&mut |_, v| {
            for (a, b) in v.iter_mut().zip(&flat[i]) {
                *a += scale * b;
            }
            i += 1;
        });
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.visit(&mut |name, _, v| {
            if bad.is_none() && v.iter().any(|x| !x.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        bad
    }

    fn check_example(&self, ex: &Example<'_>, channels: usize, n_rs: usize) -> Result<()> {
        let cfg = &self.config;
        if ex.lookback.dim() != (cfg.lookback, channels) {
            return Err(MfrsError::Shape {
                what: "lookback block",
                expected: format!("{} x {channels}", cfg.lookback),
                actual: format!("{} x {}", ex.lookback.nrows(), ex.lookback.ncols()),
            });
        }
        if ex.rs.dim() != (cfg.rs_lookback(), n_rs) {
            return Err(MfrsError::Shape {
                what: "reference block",
                expected: format!("{} x {n_rs}", cfg.rs_lookback()),
                actual: format!("{} x {}", ex.rs.nrows(), ex.rs.ncols()),
            });
        }
        Ok(())
    }

    /// Forecast for one example: `T x C`.
    pub fn forward<'a>(&self, lookback: ArrayView2<'a, f64>, rs: ArrayView2<'a, f64>) -> Result<Array2<f64>> {
        let (mut out, _) = self.forward_batch(&[Example { lookback, rs }])?;
        Ok(out.pop().expect("one example in, one out"))
    }

    /// Forecasts for a batch whose examples share `C` and `N`, plus the cache
    /// needed by [`backward`](Self::backward).
    pub fn forward_batch(&self, batch: &[Example<'_>]) -> Result<(Vec<Array2<f64>>, ForwardCache)> {
        let first = batch
            .first()
            .ok_or_else(|| MfrsError::validation("empty batch"))?;
        let (channels, n_rs) = (first.lookback.ncols(), first.rs.ncols());
        if channels == 0 || n_rs == 0 {
            return Err(MfrsError::validation("need at least one channel and one reference series"));
        }
        for ex in batch {
            self.check_example(ex, channels, n_rs)?;
        }
        let cfg = &self.config;
        let eps = cfg.epsilon_norm;
        let bsz = batch.len();

        // instance normalization; rows of xn are variate tokens
        let mut xn = Array2::zeros((bsz * channels, cfg.lookback));
        let mut rn = Array2::zeros((bsz * n_rs, cfg.rs_lookback()));
        let mut mean = Vec::with_capacity(bsz * channels);
        let mut scale = Vec::with_capacity(bsz * channels);
        for (b, ex) in batch.iter().enumerate() {
            let (norm, stats) = normalize_columns(ex.lookback, eps);
            xn.slice_mut(s![b * channels..(b + 1) * channels, ..]).assign(&norm.t());
            for (m, var) in stats {
                mean.push(m);
                scale.push((var + eps).sqrt());
            }
            let (rnorm, _) = normalize_columns(ex.rs, eps);
            rn.slice_mut(s![b * n_rs..(b + 1) * n_rs, ..]).assign(&rnorm.t());
        }

        let mut h = self.variate_embed.forward(xn.view());
        let hr = self.rs_embedding().forward(rn.view());

        let heads = cfg.heads;
        let dh = cfg.hidden / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let q = block.query.forward(h.view());
            let k = block.key.forward(hr.view());
            let v = block.value.forward(hr.view());
            let mut o = Array2::zeros(q.raw_dim());
            let mut attn = Vec::with_capacity(bsz * heads);
            for b in 0..bsz {
                let (r0, r1) = (b * channels, (b + 1) * channels);
                let (k0, k1) = (b * n_rs, (b + 1) * n_rs);
                for hd in 0..heads {
                    let (c0, c1) = (hd * dh, (hd + 1) * dh);
                    let qh = q.slice(s![r0..r1, c0..c1]);
                    let kh = k.slice(s![k0..k1, c0..c1]);
                    let vh = v.slice(s![k0..k1, c0..c1]);
                    let mut a = qh.dot(&kh.t());
                    a *= inv_sqrt;
                    softmax_rows(&mut a);
                    o.slice_mut(s![r0..r1, c0..c1]).assign(&a.dot(&vh));
                    attn.push(a);
                }
            }
            let att = block.output.forward(o.view());
            let (h1, ln1) = block.norm1.forward(&(&h + &att));
            let f1 = block.ffn_in.forward(h1.view());
            let g = f1.mapv(gelu);
            let f2 = block.ffn_out.forward(g.view());
            let (h2, ln2) = block.norm2.forward(&(&h1 + &f2));
            caches.push(BlockCache {
                h_in: std::mem::replace(&mut h, h2),
                q,
                k,
                v,
                attn,
                o,
                ln1,
                h1,
                f1,
                g,
                ln2,
            });
        }

        let y = self.projection.forward(h.view());
        let preds = (0..bsz)
            .map(|b| {
                Array2::from_shape_fn((cfg.horizon, channels), |(t, c)| {
                    let row = b * channels + c;
                    y[[row, t]] * scale[row] + mean[row]
                })
            })
            .collect();
        let cache = ForwardCache {
            batch: bsz,
            channels,
            n_rs,
            xn,
            rn,
            hr,
            blocks: caches,
            h_out: h,
            scale,
        };
        Ok((preds, cache))
    }

    /// Reverse-mode gradients of a scalar loss given `d loss / d prediction`
    /// for every example (each `T x C`).
    pub fn backward(&self, cache: &ForwardCache, d_pred: &[Array2<f64>]) -> Result<ForecastModel> {
        let cfg = &self.config;
        let (bsz, channels, n_rs) = (cache.batch, cache.channels, cache.n_rs);
        if d_pred.len() != bsz {
            return Err(MfrsError::Shape {
                what: "prediction gradients",
                expected: bsz.to_string(),
                actual: d_pred.len().to_string(),
            });
        }
        let mut grad = self.zeros_like();

        // invert-norm: y * scale + mean
        let mut dy = Array2::zeros((bsz * channels, cfg.horizon));
        for (b, dp) in d_pred.iter().enumerate() {
            if dp.dim() != (cfg.horizon, channels) {
                return Err(MfrsError::Shape {
                    what: "prediction gradient",
                    expected: format!("{} x {channels}", cfg.horizon),
                    actual: format!("{} x {}", dp.nrows(), dp.ncols()),
                });
            }
            for c in 0..channels {
                let row = b * channels + c;
                for t in 0..cfg.horizon {
                    dy[[row, t]] = dp[[t, c]] * cache.scale[row];
                }
            }
        }

        let mut dh = self.projection.backward(cache.h_out.view(), dy.view(), &mut grad.projection);
        let mut dhr = Array2::<f64>::zeros(cache.hr.raw_dim());

        let heads = cfg.heads;
        let dh_size = cfg.hidden / heads;
        let inv_sqrt = 1.0 / (dh_size as f64).sqrt();
        for (i, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let gb = &mut grad.blocks[i];
            let du2 = block.norm2.backward(&bc.ln2, &dh, &mut gb.norm2);
            let dg = block.ffn_out.backward(bc.g.view(), du2.view(), &mut gb.ffn_out);
            let mut df1 = dg;
            df1.zip_mut_with(&bc.f1, |d, &x| *d *= gelu_grad(x));
            let mut dh1 = block.ffn_in.backward(bc.h1.view(), df1.view(), &mut gb.ffn_in);
            dh1 += &du2;
            let du1 = block.norm1.backward(&bc.ln1, &dh1, &mut gb.norm1);
            let d_o = block.output.backward(bc.o.view(), du1.view(), &mut gb.output);

            let mut dq = Array2::zeros(bc.q.raw_dim());
            let mut dk = Array2::zeros(bc.k.raw_dim());
            let mut dv = Array2::zeros(bc.v.raw_dim());
            for b in 0..bsz {
                let (r0, r1) = (b * channels, (b + 1) * channels);
                let (k0, k1) = (b * n_rs, (b + 1) * n_rs);
                for hd in 0..heads {
                    let (c0, c1) = (hd * dh_size, (hd + 1) * dh_size);
                    let a = &bc.attn[b * heads + hd];
                    let doh = d_o.slice(s![r0..r1, c0..c1]);
                    let qh = bc.q.slice(s![r0..r1, c0..c1]);
                    let kh = bc.k.slice(s![k0..k1, c0..c1]);
                    let vh = bc.v.slice(s![k0..k1, c0..c1]);
                    dv.slice_mut(s![k0..k1, c0..c1]).assign(&a.t().dot(&doh));
                    let da = doh.dot(&vh.t());
                    // softmax backward, then the 1/sqrt(dh) scale
                    let mut ds = &da * a;
                    for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                        let total = row.sum();
                        row.zip_mut_with(&arow, |v, &p| *v -= p * total);
                    }
                    ds *= inv_sqrt;
                    dq.slice_mut(s![r0..r1, c0..c1]).assign(&ds.dot(&kh));
                    dk.slice_mut(s![k0..k1, c0..c1]).assign(&ds.t().dot(&qh));
                }
            }
            let mut dh_in = block.query.backward(bc.h_in.view(), dq.view(), &mut gb.query);
            dh_in += &du1;
            dhr += &block.key.backward(cache.hr.view(), dk.view(), &mut gb.key);
            dhr += &block.value.backward(cache.hr.view(), dv.view(), &mut gb.value);
            dh = dh_in;
        }

        self.variate_embed
            .accumulate(cache.xn.view(), dh.view(), &mut grad.variate_embed);
        match (&self.rs_embed, &mut grad.rs_embed) {
            (Some(rs), Some(g)) => rs.accumulate(cache.rn.view(), dhr.view(), g),
            _ => self
                .variate_embed
                .accumulate(cache.rn.view(), dhr.view(), &mut grad.variate_embed),
        }

        if let Some(name) = grad.first_non_finite() {
            return Err(MfrsError::Numeric {
                param: name,
                detail: "non-finite gradient".into(),
            });
        }
        Ok(grad)
    }
}
