use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{mel_filterbank, resample};
use crate::{Error, Result};

/// A mono signal segment.
#[derive(Clone, Debug, PartialEq)]
pub struct RawClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub source_id: String,
}

impl RawClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, source_id: impl Into<String>) -> Self {
        let duration_s = if sample_rate_hz == 0 {
            0.0
        } else {
            samples.len() as f64 / sample_rate_hz as f64
        };
        Self {
            samples,
            sample_rate_hz,
            duration_s,
            source_id: source_id.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrogramConfig {
    pub target_rate_hz: u32,
    pub n_mels: usize,
    pub n_frames: usize,
    pub fft_size: usize,
    /// Frame advance in samples. `None` spreads exactly `n_frames` frames
    /// over the clip: `floor((len - fft_size) / (n_frames - 1))`.
    pub hop: Option<usize>,
    pub log_floor: f64,
    /// Clips are zero-padded or cropped to this many seconds.
    pub clip_seconds: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self::pretrain()
    }
}

impl SpectrogramConfig {
    /// 256 frames × 32 mel bins over 60 s at 1 kHz.
    pub fn pretrain() -> Self {
        Self {
            target_rate_hz: 1000,
            n_mels: 32,
            n_frames: 256,
            fft_size: 128,
            hop: None,
            log_floor: 1e-10,
            clip_seconds: 60.0,
        }
    }

    /// 128 frames × 32 mel bins over 60 s at 1 kHz.
    pub fn finetune() -> Self {
        Self {
            n_frames: 128,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.target_rate_hz == 0 {
            return bad("target_rate_hz must be positive");
        }
        if self.n_mels == 0 || self.n_frames == 0 || self.fft_size < 2 {
            return bad("n_mels, n_frames must be positive and fft_size at least 2");
        }
        if self.hop == Some(0) {
            return bad("hop must be at least 1");
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be a small positive number");
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad("clip_seconds must be positive");
        }
        Ok(())
    }

    pub fn clip_len(&self) -> usize {
        (self.clip_seconds * self.target_rate_hz as f64).round() as usize
    }
}

/// A time × mel grid. `values` is row-major with one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub rate_hz: f64,
    pub source_id: String,
}

impl Spectrogram {
    pub fn new(
        values: Vec<f64>,
        n_frames: usize,
        n_mels: usize,
        rate_hz: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != n_frames * n_mels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_frames}x{n_mels} spectrogram",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("spectrogram contains non-finite values".into()));
        }
        Ok(Self {
            values,
            n_frames,
            n_mels,
            rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_mels)
    }

    pub fn at(&self, frame: usize, mel: usize) -> f64 {
        self.values[frame * self.n_mels + mel]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }
}

pub fn frame_hop(n_samples: usize, config: &SpectrogramConfig) -> usize {
    match config.hop {
        Some(h) => h,
        None if config.n_frames <= 1 => 1,
        None => ((n_samples - config.fft_size) / (config.n_frames - 1)).max(1),
    }
}

/// Mel energies before the log, `n_frames × n_mels`.
pub fn mel_power(clip: &RawClip, config: &SpectrogramConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if clip.samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    if clip.sample_rate_hz != config.target_rate_hz {
        return Err(Error::InvalidRate(format!(
            "clip is at {} Hz but the spectrogram expects {} Hz; resample first",
            clip.sample_rate_hz, config.target_rate_hz
        )));
    }
    if clip.samples.len() < config.fft_size {
        return Err(Error::ClipTooShort {
            len: clip.samples.len(),
            need: config.fft_size,
        });
    }
    let n = config.clip_len();
    if n < config.fft_size {
        return Err(Error::ClipTooShort {
            len: n,
            need: config.fft_size,
        });
    }
    let fb = mel_filterbank(config)?;
    let mut signal = clip.samples.clone();
    signal.resize(n, 0.0);

    let fft_size = config.fft_size;
    let hop = frame_hop(n, config);
    let window: Vec<f64> = (0..fft_size)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / fft_size as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; fb.n_bins];
    let mut out = vec![0.0; config.n_frames * config.n_mels];
    for t in 0..config.n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let x = signal.get(start + i).copied().unwrap_or(0.0);
            *b = Complex::new(x * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        fb.apply(&power, &mut out[t * config.n_mels..(t + 1) * config.n_mels]);
    }
    Ok(out)
}

/// `ln(mel · |STFT|² + log_floor)` on exactly `n_frames × n_mels` cells.
pub fn to_spectrogram(clip: &RawClip, config: &SpectrogramConfig) -> Result<Spectrogram> {
    let mut values = mel_power(clip, config)?;
    for v in &mut values {
        *v = (*v + config.log_floor).ln();
    }
    Spectrogram::new(
        values,
        config.n_frames,
        config.n_mels,
        config.target_rate_hz as f64,
        clip.source_id.clone(),
    )
}

/// Resamples when needed, then [`to_spectrogram`].
pub fn spectrogram_from_raw(clip: &RawClip, config: &SpectrogramConfig) -> Result<Spectrogram> {
    if clip.sample_rate_hz == config.target_rate_hz {
        to_spectrogram(clip, config)
    } else {
        to_spectrogram(&resample(clip, config.target_rate_hz)?, config)
    }
}

/// Min-max maps values onto [0, 1]; a constant grid maps to 0.5.
pub fn normalize(spec: &Spectrogram) -> Spectrogram {
    let (lo, hi) = spec
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if range > 0.0 {
        spec.values.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.5; spec.values.len()]
    };
    Spectrogram {
        values,
        ..spec.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel_filterbank;

    fn tone(freq: f64, rate: u32, n: usize, amp: f64) -> RawClip {
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        RawClip::new(s, rate, "tone")
    }

    #[test]
    fn silence_is_log_floor() {
        let cfg = SpectrogramConfig::pretrain();
        let spec = to_spectrogram(&RawClip::new(vec![0.0; 60_000], 1000, "z"), &cfg).unwrap();
        assert_eq!(spec.shape(), (256, 32));
        let expect = cfg.log_floor.ln();
        assert!(spec.values.iter().all(|&v| v == expect));
    }

    #[test]
    fn hop_arithmetic_for_default_grids() {
        let cfg = SpectrogramConfig::pretrain();
        assert_eq!(frame_hop(60_000, &cfg), 234);
        assert_eq!(frame_hop(60_000, &SpectrogramConfig::finetune()), 471);
        // The last frame still lies inside the clip.
        assert!(255 * 234 + 128 <= 60_000);
    }

    #[test]
    fn short_and_long_clips_are_padded_or_cropped() {
        let cfg = SpectrogramConfig::finetune();
        for n in [128, 5_000, 60_000, 90_000] {
            let spec = to_spectrogram(&tone(50.0, 1000, n, 1.0), &cfg).unwrap();
            assert_eq!(spec.shape(), (128, 32));
        }
        let long = to_spectrogram(&tone(50.0, 1000, 90_000, 1.0), &cfg).unwrap();
        let exact = to_spectrogram(&tone(50.0, 1000, 60_000, 1.0), &cfg).unwrap();
        assert_eq!(long.values, exact.values);
    }

    #[test]
    fn error_cases() {
        let cfg = SpectrogramConfig::pretrain();
        assert!(matches!(
            to_spectrogram(&RawClip::new(vec![1.0; 100], 1000, "s"), &cfg),
            Err(Error::ClipTooShort { len: 100, need: 128 })
        ));
        assert!(matches!(
            to_spectrogram(&RawClip::new(vec![], 1000, "s"), &cfg),
            Err(Error::EmptyClip)
        ));
        assert!(matches!(
            to_spectrogram(&RawClip::new(vec![0.0; 16_000], 16_000, "s"), &cfg),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn tone_at_filter_center_peaks_in_that_filter() {
        let cfg = SpectrogramConfig::pretrain();
        let fb = mel_filterbank(&cfg).unwrap();
        for m in [8, 14, 20, 27] {
            let f = fb.center_hz(m);
            let spec = to_spectrogram(&tone(f, 1000, 60_000, 1.0), &cfg).unwrap();
            for t in 0..spec.n_frames {
                let row = spec.frame(t);
                let arg = (0..32).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                assert_eq!(arg, m, "filter {m} at {f:.1} Hz, frame {t}");
            }
        }
    }

    #[test]
    fn scaling_signal_never_lowers_energy() {
        let cfg = SpectrogramConfig::finetune();
        let base = tone(73.0, 1000, 60_000, 0.5);
        let loud = RawClip::new(base.samples.iter().map(|x| 3.0 * x).collect(), 1000, "l");
        let a = mel_power(&base, &cfg).unwrap();
        let b = mel_power(&loud, &cfg).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| y >= x));
    }

    #[test]
    fn normalize_maps_to_unit_interval() {
        let vals: Vec<f64> = (0..9).map(|i| -8.0 + i as f64).collect();
        let s = Spectrogram::new(vals, 3, 3, 1000.0, "n").unwrap();
        let n = normalize(&s);
        assert_eq!(n.values[0], 0.0);
        assert_eq!(n.values[8], 1.0);
        assert!(n.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(normalize(&n).values, n.values);

        let flat = Spectrogram::new(vec![-3.0; 4], 2, 2, 1000.0, "f").unwrap();
        assert_eq!(normalize(&flat).values, vec![0.5; 4]);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(Spectrogram::new(vec![f64::NAN], 1, 1, 1.0, "x").is_err());
        assert!(Spectrogram::new(vec![0.0; 3], 2, 2, 1.0, "x").is_err());
    }
}
