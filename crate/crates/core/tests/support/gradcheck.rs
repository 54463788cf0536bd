//! Central finite differences against the analytic reverse pass.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vila_core::dsp::Spectrogram;
use vila_core::mae::{backward, sample_loss, LossRegion, MaskedSample, ModelConfig, ModelParams};
use vila_core::patching::{make_mask, patchify};

pub fn sample(seed: u64, frames: usize, mels: usize, ratio: f64) -> MaskedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..frames * mels).map(|_| rng.random::<f64>()).collect();
    let s = Spectrogram::new(v, frames, mels, 1000.0, "g").unwrap();
    let grid = patchify(&s, 4, 4).unwrap();
    let plan = make_mask(grid.n_patches(), ratio, seed).unwrap();
    MaskedSample { grid, plan }
}

/// Spreads weights away from the tiny initialization so every tensor
/// carries a gradient well above rounding noise.
fn jitter(p: &mut ModelParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in p.tensors_mut() {
        for v in &mut t.data {
            *v += 0.2 * (rng.random::<f64>() - 0.5);
        }
    }
}

/// Returns the number of coordinates checked, the worst relative error
/// and a description of each coordinate above `tol`.
pub fn check(
    config: ModelConfig,
    s: &MaskedSample,
    region: LossRegion,
    per_tensor: usize,
    tol: f64,
) -> (usize, f64, Vec<String>) {
    let mut params = ModelParams::init(&config).unwrap();
    jitter(&mut params, 11);
    let (_, grads) = backward(&params, s, region).unwrap();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut bad = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = params.tensors()[k].1.len();
        for _ in 0..per_tensor.min(len) {
            let i = rng.random_range(0..len);
            let analytic = grads.tensors()[k].1.data[i];
            let orig = params.tensors()[k].1.data[i];
            params.tensors_mut()[k].1.data[i] = orig + h;
            let up = sample_loss(&params, s, region).unwrap();
            params.tensors_mut()[k].1.data[i] = orig - h;
            let down = sample_loss(&params, s, region).unwrap();
            params.tensors_mut()[k].1.data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if !(rel < tol) {
                bad.push(format!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}"));
            }
            worst = worst.max(rel);
            count += 1;
        }
    }
    (count, worst, bad)
}
