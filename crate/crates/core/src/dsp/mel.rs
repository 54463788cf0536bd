use super::SpectrogramConfig;
use crate::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters, row-major `n_mels × n_bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    /// Filter edges in Hz: filter `m` rises from `edges[m]`, peaks at
    /// `edges[m + 1]` and falls to zero at `edges[m + 2]`.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    /// Mel energies for one power spectrum of length `n_bins`.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// Builds peak-normalized triangular filters spaced evenly on the HTK mel
/// scale between 0 Hz and the Nyquist frequency of `config.target_rate_hz`.
///
/// Fails with [`Error::NullMelBins`] when any filter would have no strictly
/// positive weight on the FFT bin grid, which is what happens when too many
/// mel bins are requested for a short FFT at a low sample rate.
pub fn mel_filterbank(config: &SpectrogramConfig) -> Result<MelFilterbank> {
    config.validate()?;
    let n_bins = config.fft_size / 2 + 1;
    let n_mels = config.n_mels;
    if n_mels > n_bins {
        return Err(Error::NullMelBins { n_mels, n_bins });
    }
    let rate = config.target_rate_hz as f64;
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(rate / 2.0));
    let mut edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    edges_hz[0] = 0.0;
    edges_hz[n_mels + 1] = rate / 2.0;
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * rate / config.fft_size as f64)
        .collect();
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (l, c, u) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (w, &f) in row.iter_mut().zip(&bin_hz) {
            *w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < u {
                (u - f) / (u - c)
            } else {
                0.0
            };
        }
        if !row.iter().any(|&w| w > 0.0) {
            return Err(Error::NullMelBins { n_mels, n_bins });
        }
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        edges_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_mels: usize, fft_size: usize) -> SpectrogramConfig {
        SpectrogramConfig {
            n_mels,
            fft_size,
            ..SpectrogramConfig::pretrain()
        }
    }

    #[test]
    fn default_bank_shape_and_positivity() {
        let fb = mel_filterbank(&cfg(32, 128)).unwrap();
        assert_eq!((fb.n_mels, fb.n_bins), (32, 65));
        assert_eq!(fb.weights.len(), 32 * 65);
        for m in 0..32 {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0);
            // Unimodal: nondecreasing up to the peak, nonincreasing after.
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn supports_cover_interior_bins() {
        let fb = mel_filterbank(&cfg(32, 128)).unwrap();
        let (lo, hi) = (fb.edges_hz[0], fb.edges_hz[33]);
        for k in 0..fb.n_bins {
            let f = k as f64 * 1000.0 / 128.0;
            if f > lo && f < hi {
                assert!((0..32).any(|m| fb.row(m)[k] > 0.0), "bin {k} uncovered");
            }
        }
    }

    #[test]
    fn flat_spectrum_gives_positive_energy() {
        let fb = mel_filterbank(&cfg(32, 128)).unwrap();
        let mut out = vec![0.0; 32];
        fb.apply(&vec![1.0; 65], &mut out);
        assert!(out.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn single_filter_spans_band() {
        let fb = mel_filterbank(&cfg(1, 128)).unwrap();
        assert_eq!(fb.edges_hz[0], 0.0);
        assert_eq!(fb.edges_hz[2], 500.0);
        assert_eq!(fb.row(0).iter().filter(|&&w| w > 0.0).count(), 63);
    }

    #[test]
    fn too_many_bins_is_null() {
        assert!(matches!(
            mel_filterbank(&cfg(64, 32)),
            Err(Error::NullMelBins { .. })
        ));
        assert!(matches!(
            mel_filterbank(&cfg(66, 128)),
            Err(Error::NullMelBins { .. })
        ));
        assert!(mel_filterbank(&cfg(65, 128)).is_ok());
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 10.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
