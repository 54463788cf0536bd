//! Seeded synthetic stand-in for an audio pretraining corpus and a labeled
//! vibration corpus.
//!
//! Both modalities come from one generative family. Each behavior class is
//! a rhythm (sustained, periodic, or scattered events) crossed with a timbre
//! (harmonic tone or band-limited noise), plus a background-only class.
//! Fundamental and band center are drawn per clip from a shared range so
//! the class is carried by temporal and harmonic structure rather than by
//! which mel bins are active. The audio side differs by a frequency warp and
//! a lower noise floor; the vibration side adds floor damping (a one-pole
//! low-pass) and a higher noise floor.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{normalize, to_spectrogram, RawClip, Spectrogram, SpectrogramConfig};
use super::manifest::Split;
use crate::finetune::{BehaviorClass, LabeledClip};
use crate::par::Exec;
use crate::seed;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Vibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_pretrain: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub rate_hz: u32,
    pub clip_seconds: f64,
    /// Multiplies every audio frequency.
    pub audio_warp: f64,
    pub audio_noise: f64,
    pub vibration_noise: f64,
    /// Cutoff of the vibration damping low-pass, Hz.
    pub damping_hz: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_pretrain: 2000,
            n_train: 70,
            n_eval: 210,
            rate_hz: 1000,
            clip_seconds: 60.0,
            audio_warp: 1.25,
            audio_noise: 0.03,
            vibration_noise: 0.08,
            damping_hz: 220.0,
        }
    }
}

pub struct SyntheticCorpus {
    /// Normalized 256×32 audio-side spectrograms.
    pub pretrain: Vec<Spectrogram>,
    /// Normalized 128×32 vibration clips, classes balanced round-robin.
    pub train: Vec<LabeledClip>,
    pub eval: Vec<LabeledClip>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rhythm {
    Sustained,
    Periodic,
    Scattered,
    Silent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Timbre {
    Tonal,
    Noisy,
}

fn recipe(class: BehaviorClass) -> (Rhythm, Timbre) {
    use BehaviorClass::*;
    match class {
        Booing => (Rhythm::Sustained, Timbre::Tonal),
        Stomping => (Rhythm::Periodic, Timbre::Noisy),
        Cheering => (Rhythm::Sustained, Timbre::Noisy),
        Clapping => (Rhythm::Scattered, Timbre::Noisy),
        Moving => (Rhythm::Scattered, Timbre::Tonal),
        Active => (Rhythm::Periodic, Timbre::Tonal),
        Quiet => (Rhythm::Silent, Timbre::Tonal),
    }
}

/// Event `(start, length)` pairs in seconds. Every non-silent rhythm covers
/// roughly the same fraction of the clip.
fn events(rhythm: Rhythm, seconds: f64, rng: &mut seed::Rng) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    match rhythm {
        Rhythm::Silent => {}
        Rhythm::Sustained => {
            let mut t = rng.random_range(0.0..3.0);
            while t < seconds {
                let len = rng.random_range(3.0..6.0);
                out.push((t, len));
                t += len + rng.random_range(3.0..6.0);
            }
        }
        Rhythm::Periodic => {
            let period = rng.random_range(1.6..2.4);
            let len = 0.5 * period;
            let mut t = rng.random_range(0.0..period);
            while t < seconds {
                out.push((t, len));
                t += period;
            }
        }
        Rhythm::Scattered => {
            let mut t = 0.0;
            loop {
                // Exponential gaps with the same mean duty cycle as above.
                let len = rng.random_range(0.3..1.5);
                t += -(1.0 - rng.random::<f64>()).ln() * 0.9;
                if t >= seconds {
                    break;
                }
                out.push((t, len));
                t += len;
            }
        }
    }
    out
}

/// Two-pole resonator (constant peak gain band-pass).
fn bandpass(x: &[f64], center_hz: f64, q: f64, rate: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * center_hz / rate;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, v, y1, y);
            y
        })
        .collect()
}

fn lowpass(x: &mut [f64], cutoff_hz: f64, rate: f64) {
    let a = (-2.0 * PI * cutoff_hz / rate).exp();
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = (1.0 - a) * *v + a * y;
        *v = y;
    }
}

/// One raw clip of the given class and modality.
pub fn synth_clip(
    class: BehaviorClass,
    modality: Modality,
    config: &SyntheticConfig,
    clip_seed: u64,
    source_id: impl Into<String>,
) -> RawClip {
    let mut rng = seed::rng(clip_seed);
    let rate = config.rate_hz as f64;
    let n = (config.clip_seconds * rate).round() as usize;
    let nyquist = 0.45 * rate;
    let warp = match modality {
        Modality::Audio => config.audio_warp,
        Modality::Vibration => 1.0,
    };
    let (rhythm, timbre) = recipe(class);
    let f0 = rng.random_range(35.0..110.0) * warp;
    let center = rng.random_range(60.0..260.0) * warp;
    let amp = rng.random_range(0.5..1.5);

    let noise = Normal::new(0.0, 1.0).unwrap();
    let carrier: Vec<f64> = match timbre {
        Timbre::Noisy => {
            let white: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            let mut b = bandpass(&white, center.min(nyquist), 1.5, rate);
            b.iter_mut().for_each(|v| *v *= 2.0);
            b
        }
        Timbre::Tonal => {
            let harmonics: Vec<(f64, f64, f64)> = (1..=8)
                .map(|h| h as f64 * f0)
                .take_while(|&f| f < nyquist)
                .enumerate()
                .map(|(k, f)| (f, 1.0 / (k + 1) as f64, rng.random_range(0.0..2.0 * PI)))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    harmonics
                        .iter()
                        .map(|(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                        .sum()
                })
                .collect()
        }
    };

    let mut env = vec![0.0f64; n];
    for (start, len) in events(rhythm, config.clip_seconds, &mut rng) {
        let level = rng.random_range(0.7..1.3);
        let (s, e) = ((start * rate) as usize, (((start + len) * rate) as usize).min(n));
        let ramp = ((0.05 * rate) as usize).max(1);
        for i in s..e {
            let edge = (i - s).min(e - 1 - i) as f64 / ramp as f64;
            env[i] = env[i].max(level * edge.min(1.0));
        }
    }

    let floor = match modality {
        Modality::Audio => config.audio_noise,
        Modality::Vibration => config.vibration_noise,
    };
    let mut samples: Vec<f64> = (0..n)
        .map(|i| amp * env[i] * carrier[i] + floor * noise.sample(&mut rng))
        .collect();
    if modality == Modality::Vibration {
        lowpass(&mut samples, config.damping_hz, rate);
    }
    RawClip::new(samples, config.rate_hz, source_id)
}

fn spectrogram_config(config: &SyntheticConfig, n_frames: usize) -> SpectrogramConfig {
    SpectrogramConfig {
        target_rate_hz: config.rate_hz,
        n_frames,
        clip_seconds: config.clip_seconds,
        ..SpectrogramConfig::pretrain()
    }
}

/// Class of labeled item `i`: round-robin so every prefix is balanced.
pub fn labeled_class(i: usize) -> BehaviorClass {
    BehaviorClass::ALL[i % BehaviorClass::ALL.len()]
}

/// Where one synthetic clip belongs and how to regenerate it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticItem {
    pub split: Split,
    pub index: usize,
    pub class: BehaviorClass,
    pub modality: Modality,
    pub seed: u64,
    pub source_id: String,
    /// Minute index of labeled items; pretraining items have none.
    pub minute_index: Option<u32>,
}

impl SyntheticItem {
    pub fn clip(&self, config: &SyntheticConfig) -> RawClip {
        synth_clip(self.class, self.modality, config, self.seed, self.source_id.clone())
    }

    /// Labels are only exposed for the train and eval splits.
    pub fn label(&self) -> Option<BehaviorClass> {
        (self.split != Split::Pretrain).then_some(self.class)
    }
}

/// Every item of the corpus in split order: pretrain, train, eval.
pub fn synthetic_items(config: &SyntheticConfig) -> Vec<SyntheticItem> {
    let root = config.seed;
    let mut out = Vec::with_capacity(config.n_pretrain + config.n_train + config.n_eval);
    for i in 0..config.n_pretrain {
        let s = seed::derive(root, &format!("synthetic/pretrain/{i}"));
        out.push(SyntheticItem {
            split: Split::Pretrain,
            index: i,
            class: BehaviorClass::ALL[seed::rng(s).random_range(0..BehaviorClass::ALL.len())],
            modality: Modality::Audio,
            seed: s,
            source_id: format!("audio-{i:05}"),
            minute_index: None,
        });
    }
    for (split, name, n, offset) in [
        (Split::Train, "train", config.n_train, 0),
        (Split::Eval, "eval", config.n_eval, config.n_train),
    ] {
        for i in 0..n {
            out.push(SyntheticItem {
                split,
                index: i,
                class: labeled_class(i),
                modality: Modality::Vibration,
                seed: seed::derive(root, &format!("synthetic/{name}/{i}")),
                source_id: format!("{name}-{i:04}"),
                minute_index: Some((offset + i) as u32),
            });
        }
    }
    out
}

pub fn gen_synthetic_corpus(exec: Exec, config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let pre_cfg = spectrogram_config(config, 256);
    let fine_cfg = spectrogram_config(config, 128);
    let items = synthetic_items(config);
    let specs = exec.try_map(&items, |it| {
        let cfg = if it.split == Split::Pretrain { &pre_cfg } else { &fine_cfg };
        to_spectrogram(&it.clip(config), cfg).map(|sp| normalize(&sp))
    })?;
    let mut corpus = SyntheticCorpus {
        pretrain: Vec::with_capacity(config.n_pretrain),
        train: Vec::with_capacity(config.n_train),
        eval: Vec::with_capacity(config.n_eval),
    };
    for (it, spectrogram) in items.into_iter().zip(specs) {
        let labeled = |spectrogram| LabeledClip {
            spectrogram,
            label: it.class,
            minute_index: it.minute_index.unwrap_or(0),
            venue_id: "synthetic".into(),
        };
        match it.split {
            Split::Pretrain => corpus.pretrain.push(spectrogram),
            Split::Train => corpus.train.push(labeled(spectrogram)),
            Split::Eval => corpus.eval.push(labeled(spectrogram)),
        }
    }
    Ok(corpus)
}
