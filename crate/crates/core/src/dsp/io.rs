use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{RawClip, Spectrogram};
use crate::{Error, Result};

pub const SPEC1_MAGIC: &[u8; 5] = b"SPEC1";
const SPEC1_HEADER: usize = 5 + 4 + 4 + 8;

fn source_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a mono WAV file with 16-bit integer or 32-bit float samples.
/// Integer samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<RawClip> {
    let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(|e| bad(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(bad(format!("expected mono, found {} channels", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => return Err(bad(format!("unsupported sample format {fmt:?}/{bits}"))),
    }
    .map_err(|e| bad(e.to_string()))?;
    if samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    Ok(RawClip::new(samples, spec.sample_rate, source_id(path)))
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: &Path, clip: &RawClip) -> Result<()> {
    let bad = |e: hound::Error| Error::Format(format!("{}: {e}", path.display()));
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(bad)?;
    for &v in &clip.samples {
        w.write_sample(v as f32).map_err(bad)?;
    }
    w.finalize().map_err(bad)
}

/// Reads a single-column sample file whose first line is
/// `sample_rate_hz=<int>`.
pub fn read_csv_clip(path: &Path) -> Result<RawClip> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, m: &str| Error::Format(format!("{}:{line}: {m}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let rate: u32 = header
        .trim()
        .strip_prefix("sample_rate_hz=")
        .and_then(|r| r.trim().parse().ok())
        .filter(|&r| r > 0)
        .ok_or_else(|| bad(1, "header must be sample_rate_hz=<positive int>"))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| bad(i + 2, "not a number"))?;
        if !v.is_finite() {
            return Err(bad(i + 2, "non-finite sample"));
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    Ok(RawClip::new(samples, rate, source_id(path)))
}

/// Little-endian `SPEC1` container: magic, `u32` frames, `u32` mel bins,
/// `f64` sample rate, then row-major `f32` values.
pub fn encode_spec1(spec: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(SPEC1_HEADER + 4 * spec.values.len());
    out.extend_from_slice(SPEC1_MAGIC);
    out.extend_from_slice(&(spec.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&spec.rate_hz.to_le_bytes());
    for v in &spec.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_spec1(bytes: &[u8], source_id: impl Into<String>) -> Result<Spectrogram> {
    if bytes.len() < SPEC1_HEADER || &bytes[..5] != SPEC1_MAGIC {
        return Err(Error::Format("not a SPEC1 container".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let n_frames = u32_at(5);
    let n_mels = u32_at(9);
    let rate = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let body = &bytes[SPEC1_HEADER..];
    if body.len() != 4 * n_frames * n_mels {
        return Err(Error::Format(format!(
            "SPEC1 body has {} bytes, header says {n_frames}x{n_mels}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Spectrogram::new(values, n_frames, n_mels, rate, source_id)
}

pub fn write_spec1(path: &Path, spec: &Spectrogram) -> Result<()> {
    std::fs::write(path, encode_spec1(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_spec1(path: &Path) -> Result<Spectrogram> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_spec1(&bytes, source_id(path))
}
