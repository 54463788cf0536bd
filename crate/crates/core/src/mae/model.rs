use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{Block, BlockCache, LayerNorm, LnCache, Linear};
use super::tensor::Tensor;
use crate::patching::{MaskPlan, PatchGrid};
use crate::seed;
use crate::{Error, Result};

pub const N_CLASSES: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub mlp_ratio: f64,
    pub patch_h: usize,
    pub patch_w: usize,
    pub max_patches: usize,
    /// Width of the decoder stack; the encoder output is projected to it.
    pub dec_embed_dim: usize,
    /// Decoder tokens attend within contiguous windows of this many
    /// patches (time-major order). 0 means global attention.
    pub dec_window: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            n_layers_enc: 4,
            n_layers_dec: 2,
            n_heads: 4,
            mlp_ratio: 2.0,
            patch_h: 4,
            patch_w: 4,
            max_patches: 512,
            dec_embed_dim: 64,
            dec_window: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// The small model used for gradient checks: width 32, two encoder
    /// blocks and one decoder block.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 32,
            n_layers_enc: 2,
            n_layers_dec: 1,
            n_heads: 4,
            dec_embed_dim: 32,
            ..Self::default()
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_h * self.patch_w
    }

    pub fn hidden(&self, d: usize) -> usize {
        ((d as f64 * self.mlp_ratio).round() as usize).max(1)
    }

    pub fn dec_window(&self) -> Option<usize> {
        (self.dec_window > 0).then_some(self.dec_window)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let positive = [
            ("embed_dim", self.embed_dim),
            ("n_heads", self.n_heads),
            ("patch_h", self.patch_h),
            ("patch_w", self.patch_w),
            ("max_patches", self.max_patches),
            ("dec_embed_dim", self.dec_embed_dim),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{k} must be positive"));
        }
        if self.n_layers_enc == 0 {
            return bad("n_layers_enc must be positive".into());
        }
        if !(self.mlp_ratio > 0.0) {
            return bad("mlp_ratio must be positive".into());
        }
        for (k, d) in [("embed_dim", self.embed_dim), ("dec_embed_dim", self.dec_embed_dim)] {
            if d % self.n_heads != 0 {
                return bad(format!("{k}={d} is not divisible by n_heads={}", self.n_heads));
            }
            if d % 4 != 0 {
                return bad(format!("{k}={d} must be a multiple of 4 for 2-D positional encoding"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub patch_embed: Linear,
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub embed: Linear,
    pub mask_token: Tensor,
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
    pub pred: Linear,
}

/// Fully connected classification head over mean-pooled encoder tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub linear: Linear,
}

/// Every learnable tensor. Gradients use the same type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub head: Option<ClassifierHead>,
}

macro_rules! push_linear {
    ($v:ident, $p:expr, $l:expr; $($r:tt)+) => {
        $v.push((format!("{}.weight", $p), $($r)+ $l.weight));
        $v.push((format!("{}.bias", $p), $($r)+ $l.bias));
    };
}
macro_rules! push_norm {
    ($v:ident, $p:expr, $l:expr; $($r:tt)+) => {
        $v.push((format!("{}.gamma", $p), $($r)+ $l.gamma));
        $v.push((format!("{}.beta", $p), $($r)+ $l.beta));
    };
}
macro_rules! push_block {
    ($v:ident, $p:expr, $b:expr; $($r:tt)+) => {
        push_norm!($v, format!("{}.norm1", $p), $b.norm1; $($r)+);
        push_linear!($v, format!("{}.attn.qkv", $p), $b.qkv; $($r)+);
        push_linear!($v, format!("{}.attn.proj", $p), $b.proj; $($r)+);
        push_norm!($v, format!("{}.norm2", $p), $b.norm2; $($r)+);
        push_linear!($v, format!("{}.mlp.fc1", $p), $b.fc1; $($r)+);
        push_linear!($v, format!("{}.mlp.fc2", $p), $b.fc2; $($r)+);
    };
}
/// Expands to the ordered `(name, tensor)` list; `$($r)+` is `&` or `&mut`.
macro_rules! named_tensors {
    ($s:expr, $iter:ident; $($r:tt)+) => {{
        let mut v = Vec::new();
        push_linear!(v, "encoder.patch_embed", $s.encoder.patch_embed; $($r)+);
        for (i, b) in $s.encoder.blocks.$iter().enumerate() {
            push_block!(v, format!("encoder.blocks.{i}"), b; $($r)+);
        }
        push_norm!(v, "encoder.norm", $s.encoder.norm; $($r)+);
        push_linear!(v, "decoder.embed", $s.decoder.embed; $($r)+);
        v.push(("decoder.mask_token".to_string(), $($r)+ $s.decoder.mask_token));
        for (i, b) in $s.decoder.blocks.$iter().enumerate() {
            push_block!(v, format!("decoder.blocks.{i}"), b; $($r)+);
        }
        push_norm!(v, "decoder.norm", $s.decoder.norm; $($r)+);
        push_linear!(v, "decoder.pred", $s.decoder.pred; $($r)+);
        if let Some(h) = $($r)+ $s.head {
            push_linear!(v, "head", h.linear; $($r)+);
        }
        v
    }};
}

impl ModelParams {
    /// All tensors zero, including norm scales.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, dd) = (config.embed_dim, config.dec_embed_dim);
        Ok(Self {
            config: config.clone(),
            encoder: Encoder {
                patch_embed: Linear::zeros(config.patch_dim(), d),
                blocks: (0..config.n_layers_enc)
                    .map(|_| Block::zeros(d, config.hidden(d)))
                    .collect(),
                norm: LayerNorm::zeros(d),
            },
            decoder: Decoder {
                embed: Linear::zeros(d, dd),
                mask_token: Tensor::zeros(&[dd]),
                blocks: (0..config.n_layers_dec)
                    .map(|_| Block::zeros(dd, config.hidden(dd)))
                    .collect(),
                norm: LayerNorm::zeros(dd),
                pred: Linear::zeros(dd, config.patch_dim()),
            },
            head: None,
        })
    }

    /// Truncated-normal (σ = 0.02, cut at 2σ) projections and mask token,
    /// zero biases, unit norm scales. Seeded from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = seed::child_rng(config.seed, "model/init");
        for (name, t) in p.tensors_mut() {
            if name.ends_with(".weight") || name.ends_with("mask_token") {
                fill_trunc_normal(&mut t.data, 0.02, &mut rng);
            } else if name.ends_with(".gamma") {
                t.data.fill(1.0);
            }
        }
        Ok(p)
    }

    /// Attaches a freshly initialized `embed_dim × 7` head, seeded by `seed`.
    pub fn attach_head(&mut self, seed: u64) {
        let mut linear = Linear::zeros(self.config.embed_dim, N_CLASSES);
        let mut rng = seed::child_rng(seed, "model/head");
        fill_trunc_normal(&mut linear.weight.data, 0.02, &mut rng);
        self.head = Some(ClassifierHead { linear });
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    /// Tensors in a fixed order with dotted names.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        named_tensors!(self, iter; &)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        named_tensors!(self, iter_mut; &mut)
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y);
        }
    }
}

fn fill_trunc_normal(data: &mut [f64], std: f64, rng: &mut seed::Rng) {
    let normal = Normal::new(0.0, std).expect("valid std");
    for v in data {
        *v = loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= 2.0 * std {
                break x;
            }
        };
    }
}

/// Fixed 2-D sinusoidal encoding: the first half of the channels encodes the
/// time (row) index, the second half the frequency (column) index, each as
/// `[sin(pos·ω_k) | cos(pos·ω_k)]` with `ω_k = 10000^(-k / (dim/4))`.
pub fn positional_encoding(rows: usize, cols: usize, dim: usize) -> Vec<f64> {
    let quarter = dim / 4;
    let omega: Vec<f64> = (0..quarter)
        .map(|k| 1.0 / 10000f64.powf(k as f64 / quarter as f64))
        .collect();
    let mut pe = vec![0.0; rows * cols * dim];
    for r in 0..rows {
        for c in 0..cols {
            let row = &mut pe[(r * cols + c) * dim..(r * cols + c + 1) * dim];
            for (k, w) in omega.iter().enumerate() {
                row[k] = (r as f64 * w).sin();
                row[quarter + k] = (r as f64 * w).cos();
                row[2 * quarter + k] = (c as f64 * w).sin();
                row[3 * quarter + k] = (c as f64 * w).cos();
            }
        }
    }
    pe
}

pub(crate) struct EncoderCache {
    tokens: Vec<f64>,
    blocks: Vec<BlockCache>,
    norm: LnCache,
}

pub(crate) struct DecoderCache {
    encoded: Vec<f64>,
    visible: Vec<usize>,
    masked: Vec<usize>,
    blocks: Vec<BlockCache>,
    norm: LnCache,
    normed: Vec<f64>,
}

impl ModelParams {
    pub(crate) fn check_grid(&self, grid: &PatchGrid) -> Result<()> {
        grid.check()?;
        let c = &self.config;
        if (grid.patch_h, grid.patch_w) != (c.patch_h, c.patch_w) {
            return Err(Error::ShapeMismatch(format!(
                "grid patches are {}x{}, model expects {}x{}",
                grid.patch_h, grid.patch_w, c.patch_h, c.patch_w
            )));
        }
        if grid.n_patches() > c.max_patches {
            return Err(Error::ShapeMismatch(format!(
                "{} patches exceed max_patches={}",
                grid.n_patches(),
                c.max_patches
            )));
        }
        Ok(())
    }

    /// Encodes the patches at `indices` (in the given order).
    pub(crate) fn encode_tokens(&self, grid: &PatchGrid, indices: &[usize]) -> (Vec<f64>, EncoderCache) {
        let d = self.config.embed_dim;
        let pd = grid.patch_dim();
        let n = indices.len();
        let mut tokens = Vec::with_capacity(n * pd);
        for &i in indices {
            tokens.extend_from_slice(grid.patch(i));
        }
        let mut x = self.encoder.patch_embed.forward(&tokens, n);
        let pe = positional_encoding(grid.rows, grid.cols, d);
        for (row, &i) in x.chunks_exact_mut(d).zip(indices) {
            row.iter_mut().zip(&pe[i * d..(i + 1) * d]).for_each(|(a, b)| *a += b);
        }
        let mut caches = Vec::with_capacity(self.encoder.blocks.len());
        for b in &self.encoder.blocks {
            let (y, c) = b.forward(&x, self.config.n_heads, None);
            x = y;
            caches.push(c);
        }
        let (out, norm) = self.encoder.norm.forward(&x, d);
        (
            out,
            EncoderCache {
                tokens,
                blocks: caches,
                norm,
            },
        )
    }

    pub(crate) fn encode_backward(&self, cache: &EncoderCache, dout: &[f64], g: &mut ModelParams) {
        let d = self.config.embed_dim;
        let n = dout.len() / d;
        let mut dx = self.encoder.norm.backward(dout, &cache.norm, d, &mut g.encoder.norm);
        for (i, b) in self.encoder.blocks.iter().enumerate().rev() {
            dx = b.backward(&cache.blocks[i], &dx, self.config.n_heads, None, &mut g.encoder.blocks[i]);
        }
        self.encoder
            .patch_embed
            .accumulate(&cache.tokens, &dx, n, &mut g.encoder.patch_embed);
    }

    /// Predicts every patch of the grid from the encoded visible tokens.
    pub(crate) fn decode_tokens(
        &self,
        encoded: &[f64],
        plan: &MaskPlan,
        rows: usize,
        cols: usize,
    ) -> (Vec<f64>, DecoderCache) {
        let dd = self.config.dec_embed_dim;
        let visible = plan.visible_indices();
        let masked = plan.masked_indices();
        let total = plan.n_patches();
        let y = self.decoder.embed.forward(encoded, visible.len());
        let pe = positional_encoding(rows, cols, dd);
        let mut x = pe;
        for (j, &i) in visible.iter().enumerate() {
            x[i * dd..(i + 1) * dd]
                .iter_mut()
                .zip(&y[j * dd..(j + 1) * dd])
                .for_each(|(a, b)| *a += b);
        }
        for &i in &masked {
            x[i * dd..(i + 1) * dd]
                .iter_mut()
                .zip(&self.decoder.mask_token.data)
                .for_each(|(a, b)| *a += b);
        }
        let window = self.config.dec_window();
        let mut caches = Vec::with_capacity(self.decoder.blocks.len());
        for b in &self.decoder.blocks {
            let (out, c) = b.forward(&x, self.config.n_heads, window);
            x = out;
            caches.push(c);
        }
        let (normed, norm) = self.decoder.norm.forward(&x, dd);
        let pred = self.decoder.pred.forward(&normed, total);
        (
            pred,
            DecoderCache {
                encoded: encoded.to_vec(),
                visible,
                masked,
                blocks: caches,
                norm,
                normed,
            },
        )
    }

    /// Returns the gradient with respect to the encoder output.
    pub(crate) fn decode_backward(&self, cache: &DecoderCache, dpred: &[f64], g: &mut ModelParams) -> Vec<f64> {
        let dd = self.config.dec_embed_dim;
        let total = cache.visible.len() + cache.masked.len();
        let dnormed = self.decoder.pred.backward(&cache.normed, dpred, total, &mut g.decoder.pred);
        let mut dx = self.decoder.norm.backward(&dnormed, &cache.norm, dd, &mut g.decoder.norm);
        let window = self.config.dec_window();
        for (i, b) in self.decoder.blocks.iter().enumerate().rev() {
            dx = b.backward(&cache.blocks[i], &dx, self.config.n_heads, window, &mut g.decoder.blocks[i]);
        }
        for &i in &cache.masked {
            g.decoder
                .mask_token
                .data
                .iter_mut()
                .zip(&dx[i * dd..(i + 1) * dd])
                .for_each(|(a, b)| *a += b);
        }
        let mut dy = Vec::with_capacity(cache.visible.len() * dd);
        for &i in &cache.visible {
            dy.extend_from_slice(&dx[i * dd..(i + 1) * dd]);
        }
        self.decoder
            .embed
            .backward(&cache.encoded, &dy, cache.visible.len(), &mut g.decoder.embed)
    }
}
