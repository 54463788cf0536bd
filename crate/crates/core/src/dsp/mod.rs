//! Raw signals to fixed-size log-mel spectrograms.
//!
//! Signals are resampled to the target rate (1 kHz by default), padded or
//! cropped to a fixed clip length, framed with a Hann window so that exactly
//! `n_frames` frames cover the clip, and projected onto a peak-normalized
//! triangular mel filterbank. Rows of a [`Spectrogram`] are frames (time),
//! columns are mel bins.

mod io;
mod mel;
mod resample;
mod spectrogram;

pub use io::{read_csv_clip, read_spec1, read_wav, write_spec1, write_wav, decode_spec1, encode_spec1, SPEC1_MAGIC};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use spectrogram::{
    frame_hop, mel_power, normalize, spectrogram_from_raw, to_spectrogram, RawClip, Spectrogram,
    SpectrogramConfig,
};
