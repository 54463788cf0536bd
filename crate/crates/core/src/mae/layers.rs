//! Transformer building blocks with explicit forward caches and backward
//! passes. Activations are row-major `tokens × features` matrices.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matmul, matmul_nt, matmul_tn_acc, Tensor, View};

const LN_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in × out`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[d_in, d_out]),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (di, d) = (self.d_in(), self.d_out());
        let mut y = matmul(x, &self.weight.data, n, di, d);
        for row in y.chunks_exact_mut(d) {
            row.iter_mut().zip(&self.bias.data).for_each(|(v, b)| *v += b);
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], n: usize, g: &mut Linear) -> Vec<f64> {
        self.accumulate(x, dy, n, g);
        matmul_nt(dy, &self.weight.data, n, self.d_out(), self.d_in())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate(&self, x: &[f64], dy: &[f64], n: usize, g: &mut Linear) {
        let (di, d) = (self.d_in(), self.d_out());
        matmul_tn_acc(x, dy, n, di, d, &mut g.weight.data);
        for row in dy.chunks_exact(d) {
            g.bias.data.iter_mut().zip(row).for_each(|(b, v)| *b += v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub(crate) struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            gamma: Tensor::zeros(&[d]),
            beta: Tensor::zeros(&[d]),
        }
    }

    pub(crate) fn forward(&self, x: &[f64], d: usize) -> (Vec<f64>, LnCache) {
        let n = x.len() / d;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; n];
        let mut y = vec![0.0; x.len()];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                y[i * d + j] = h * self.gamma.data[j] + self.beta.data[j];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub(crate) fn backward(&self, dy: &[f64], c: &LnCache, d: usize, g: &mut LayerNorm) -> Vec<f64> {
        let n = dy.len() / d;
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; d];
        for i in 0..n {
            let dyr = &dy[i * d..(i + 1) * d];
            let xh = &c.xhat[i * d..(i + 1) * d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for j in 0..d {
                g.gamma.data[j] += dyr[j] * xh[j];
                g.beta.data[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gamma.data[j];
                s1 += dxhat[j];
                s2 += dxhat[j] * xh[j];
            }
            let k = c.inv_std[i] / d as f64;
            for j in 0..d {
                dx[i * d + j] = k * (d as f64 * dxhat[j] - s1 - xh[j] * s2);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Contiguous token windows; `None` is a single global window.
pub(crate) fn windows(n: usize, window: Option<usize>) -> Vec<(usize, usize)> {
    let w = window.filter(|&w| w > 0 && w < n).unwrap_or(n.max(1));
    (0..n).step_by(w).map(|s| (s, (s + w).min(n))).collect()
}

pub(crate) struct AttnCache {
    /// Softmax probabilities for each (window, head), concatenated.
    probs: Vec<f64>,
}

/// Multi-head scaled dot-product attention over a fused `n × 3d` QKV
/// matrix. Tokens only attend within their window.
pub(crate) fn attention(
    qkv: &[f64],
    n: usize,
    d: usize,
    heads: usize,
    window: Option<usize>,
) -> (Vec<f64>, AttnCache) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![0.0; n * d];
    let wins = windows(n, window);
    let mut probs = Vec::with_capacity(wins.iter().map(|(s, e)| (e - s) * (e - s)).sum::<usize>() * heads);
    for &(s, e) in &wins {
        let len = e - s;
        for h in 0..heads {
            let q = head_view(s, len, 3 * d, h * hd, hd);
            let k = head_view(s, len, 3 * d, d + h * hd, hd);
            let v = head_view(s, len, 3 * d, 2 * d + h * hd, hd);
            let mut p = vec![0.0; len * len];
            gemm(scale, qkv, q, qkv, k.t(), 0.0, &mut p, View::dense(len, len));
            for row in p.chunks_exact_mut(len) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    z += *x;
                }
                row.iter_mut().for_each(|x| *x /= z);
            }
            let o = head_view(s, len, d, h * hd, hd);
            gemm(1.0, &p, View::dense(len, len), qkv, v, 0.0, &mut out, o);
            probs.extend_from_slice(&p);
        }
    }
    (out, AttnCache { probs })
}

pub(crate) fn attention_backward(
    qkv: &[f64],
    cache: &AttnCache,
    dout: &[f64],
    n: usize,
    d: usize,
    heads: usize,
    window: Option<usize>,
) -> Vec<f64> {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dqkv = vec![0.0; n * 3 * d];
    let mut off = 0;
    for (s, e) in windows(n, window) {
        let len = e - s;
        for h in 0..heads {
            let p = &cache.probs[off..off + len * len];
            off += len * len;
            let q = head_view(s, len, 3 * d, h * hd, hd);
            let k = head_view(s, len, 3 * d, d + h * hd, hd);
            let v = head_view(s, len, 3 * d, 2 * d + h * hd, hd);
            let o = head_view(s, len, d, h * hd, hd);
            // dV = Pᵀ dO
            gemm(1.0, p, View::dense(len, len).t(), dout, o, 0.0, &mut dqkv, v);
            // dP = dO Vᵀ, then through the softmax.
            let mut ds = vec![0.0; len * len];
            gemm(1.0, dout, o, qkv, v.t(), 0.0, &mut ds, View::dense(len, len));
            for (dsr, pr) in ds.chunks_exact_mut(len).zip(p.chunks_exact(len)) {
                let dot: f64 = dsr.iter().zip(pr).map(|(a, b)| a * b).sum();
                dsr.iter_mut().zip(pr).for_each(|(g, pv)| *g = pv * (*g - dot));
            }
            // dQ = dS K · scale, dK = dSᵀ Q · scale
            gemm(scale, &ds, View::dense(len, len), qkv, k, 0.0, &mut dqkv, q);
            gemm(scale, &ds, View::dense(len, len).t(), qkv, q, 0.0, &mut dqkv, k);
        }
    }
    dqkv
}

fn head_view(start: usize, len: usize, row_stride: usize, col: usize, width: usize) -> View {
    View {
        offset: start * row_stride + col,
        rows: len,
        cols: width,
        rs: row_stride,
        cs: 1,
    }
}

/// Pre-norm transformer block: `x + Attn(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub norm1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

pub(crate) struct BlockCache {
    ln1: LnCache,
    h1: Vec<f64>,
    qkv: Vec<f64>,
    attn: AttnCache,
    attn_out: Vec<f64>,
    ln2: LnCache,
    h2: Vec<f64>,
    f1: Vec<f64>,
    g: Vec<f64>,
}

impl Block {
    pub fn zeros(d: usize, hidden: usize) -> Self {
        Self {
            norm1: LayerNorm::zeros(d),
            qkv: Linear::zeros(d, 3 * d),
            proj: Linear::zeros(d, d),
            norm2: LayerNorm::zeros(d),
            fc1: Linear::zeros(d, hidden),
            fc2: Linear::zeros(hidden, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.proj.d_out()
    }

    pub(crate) fn forward(
        &self,
        x: &[f64],
        heads: usize,
        window: Option<usize>,
    ) -> (Vec<f64>, BlockCache) {
        let d = self.dim();
        let n = x.len() / d;
        let (h1, ln1) = self.norm1.forward(x, d);
        let qkv = self.qkv.forward(&h1, n);
        let (attn_out, attn) = attention(&qkv, n, d, heads, window);
        let a = self.proj.forward(&attn_out, n);
        let x2: Vec<f64> = x.iter().zip(&a).map(|(p, q)| p + q).collect();
        let (h2, ln2) = self.norm2.forward(&x2, d);
        let f1 = self.fc1.forward(&h2, n);
        let g: Vec<f64> = f1.iter().map(|&v| gelu(v)).collect();
        let f2 = self.fc2.forward(&g, n);
        let out = x2.iter().zip(&f2).map(|(p, q)| p + q).collect();
        (
            out,
            BlockCache {
                ln1,
                h1,
                qkv,
                attn,
                attn_out,
                ln2,
                h2,
                f1,
                g,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        c: &BlockCache,
        dout: &[f64],
        heads: usize,
        window: Option<usize>,
        g: &mut Block,
    ) -> Vec<f64> {
        let d = self.dim();
        let n = dout.len() / d;
        let dg = self.fc2.backward(&c.g, dout, n, &mut g.fc2);
        let df1: Vec<f64> = dg
            .iter()
            .zip(&c.f1)
            .map(|(dv, &x)| dv * gelu_grad(x))
            .collect();
        let dh2 = self.fc1.backward(&c.h2, &df1, n, &mut g.fc1);
        let mut dx2 = self.norm2.backward(&dh2, &c.ln2, d, &mut g.norm2);
        dx2.iter_mut().zip(dout).for_each(|(a, b)| *a += b);
        let dattn = self.proj.backward(&c.attn_out, &dx2, n, &mut g.proj);
        let dqkv = attention_backward(&c.qkv, &c.attn, &dattn, n, d, heads, window);
        let dh1 = self.qkv.backward(&c.h1, &dqkv, n, &mut g.qkv);
        let mut dx = self.norm1.backward(&dh1, &c.ln1, d, &mut g.norm1);
        dx.iter_mut().zip(&dx2).for_each(|(a, b)| *a += b);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_partition() {
        assert_eq!(windows(10, None), vec![(0, 10)]);
        assert_eq!(windows(10, Some(4)), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(windows(3, Some(8)), vec![(0, 3)]);
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for x in [-3.0, -0.5, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let (n, d, heads) = (6, 4, 2);
        let qkv: Vec<f64> = (0..n * 3 * d).map(|i| (i as f64 * 0.7).sin()).collect();
        let (out, cache) = attention(&qkv, n, d, heads, Some(4));
        assert_eq!(out.len(), n * d);
        // windows of 4 and 2 tokens, two heads each
        assert_eq!(cache.probs.len(), 2 * 16 + 2 * 4);
        for row in cache.probs[..16].chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // A token in the second window only mixes values from that window.
        let v_range = |t: usize, h: usize| qkv[t * 3 * d + 2 * d + h * 2];
        let lo = v_range(4, 0).min(v_range(5, 0));
        let hi = v_range(4, 0).max(v_range(5, 0));
        assert!(out[4 * d] >= lo - 1e-12 && out[4 * d] <= hi + 1e-12);
    }
}
