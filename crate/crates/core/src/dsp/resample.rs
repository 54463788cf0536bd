use std::f64::consts::PI;

use super::RawClip;
use crate::{Error, Result};

/// Rate pairs whose reduced upsampling factor exceeds this use linear
/// interpolation instead of a polyphase filter bank.
const MAX_PHASES: u64 = 512;
/// Zero crossings of the sinc kernel on each side of the center tap.
const ZERO_CROSSINGS: f64 = 16.0;
/// Passband edge as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.94;

/// Resamples `clip` to `target_rate_hz` (downsampling only).
///
/// The output has `round(len × target / source)` samples. When the reduced
/// ratio `target/source = up/down` has `up ≤ 512` a Hann-windowed sinc
/// polyphase filter is used, otherwise linear interpolation. Every output
/// sample is a convex-normalized combination of input samples with edge
/// replication, so constant signals stay exactly constant.
pub fn resample(clip: &RawClip, target_rate_hz: u32) -> Result<RawClip> {
    if clip.samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    if target_rate_hz == 0 || clip.sample_rate_hz == 0 {
        return Err(Error::InvalidRate("rate must be positive".into()));
    }
    if target_rate_hz > clip.sample_rate_hz {
        return Err(Error::InvalidRate(format!(
            "cannot upsample {} Hz to {} Hz",
            clip.sample_rate_hz, target_rate_hz
        )));
    }
    if target_rate_hz == clip.sample_rate_hz {
        return Ok(clip.clone());
    }
    let src = clip.sample_rate_hz as u64;
    let dst = target_rate_hz as u64;
    let out_len = ((clip.samples.len() as u128 * dst as u128 + (src as u128) / 2) / src as u128) as usize;
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let samples = if up <= MAX_PHASES {
        polyphase(&clip.samples, up as usize, down as usize, out_len)
    } else {
        linear(&clip.samples, src as f64 / dst as f64, out_len)
    };
    Ok(RawClip::new(samples, target_rate_hz, clip.source_id.clone()))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn polyphase(x: &[f64], up: usize, down: usize, out_len: usize) -> Vec<f64> {
    // Cutoff in cycles per input sample.
    let fc = 0.5 * ROLLOFF * up as f64 / down as f64;
    let half = (ZERO_CROSSINGS / (2.0 * fc)).ceil() as i64;
    // taps[p][k] weights input sample n + k - half + 1 for output phase p.
    let taps: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut row: Vec<f64> = (-half + 1..=half)
                .map(|k| {
                    let t = k as f64 - frac;
                    let w = if t.abs() < half as f64 {
                        0.5 * (1.0 + (PI * t / half as f64).cos())
                    } else {
                        0.0
                    };
                    2.0 * fc * sinc(2.0 * fc * t) * w
                })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    let last = x.len() as i64 - 1;
    (0..out_len)
        .map(|j| {
            let pos = j * down;
            let n = (pos / up) as i64;
            let row = &taps[pos % up];
            row.iter()
                .enumerate()
                .map(|(i, w)| {
                    let idx = (n + i as i64 - half + 1).clamp(0, last) as usize;
                    w * x[idx]
                })
                .sum()
        })
        .collect()
}

fn linear(x: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let last = x.len() - 1;
    (0..out_len)
        .map(|j| {
            let pos = j as f64 * step;
            let i = (pos.floor() as usize).min(last);
            let frac = pos - i as f64;
            let next = (i + 1).min(last);
            x[i] * (1.0 - frac) + x[next] * frac
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
