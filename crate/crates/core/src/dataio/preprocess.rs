use std::path::Path;

use super::frames::{read_frame_dir, read_pgm, strip_wise, Image};
use super::manifest::{EntryModality, ManifestEntry};
use crate::dsp::{normalize, read_csv_clip, read_wav, spectrogram_from_raw, Spectrogram, SpectrogramConfig};
use crate::{Error, Result};

/// Nearest-neighbour resize of an image onto a `rows × cols` grid.
pub fn resize_nearest(img: &Image, rows: usize, cols: usize) -> Result<Image> {
    if rows == 0 || cols == 0 || img.rows == 0 || img.cols == 0 {
        return Err(Error::ShapeMismatch("cannot resize an empty image".into()));
    }
    let data = (0..rows * cols)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            img.at(r * img.rows / rows, c * img.cols / cols)
        })
        .collect();
    Image::new(rows, cols, data)
}

fn image_to_spec(img: &Image, config: &SpectrogramConfig, id: &str) -> Result<Spectrogram> {
    let g = resize_nearest(img, config.n_frames, config.n_mels)?;
    Spectrogram::new(g.data, config.n_frames, config.n_mels, config.target_rate_hz as f64, id)
}

/// Turns one manifest entry into a normalized `n_frames × n_mels` grid.
///
/// Audio and vibration entries are WAV or CSV signals. Image entries are
/// PGM files. Video entries are frame directories, reduced to the
/// strip-wise image of their middle column.
pub fn load_entry(entry: &ManifestEntry, root: &Path, config: &SpectrogramConfig) -> Result<Spectrogram> {
    let path = root.join(&entry.path);
    let id = entry.path.as_str();
    let spec = match entry.modality {
        EntryModality::Audio | EntryModality::Vibration => {
            let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let mut clip = if is_csv { read_csv_clip(&path)? } else { read_wav(&path)? };
            if let Some(rate) = entry.sample_rate_hz {
                if rate != clip.sample_rate_hz {
                    return Err(Error::Format(format!(
                        "{id}: manifest says {rate} Hz, file says {} Hz",
                        clip.sample_rate_hz
                    )));
                }
            }
            clip.source_id = id.into();
            spectrogram_from_raw(&clip, config)?
        }
        EntryModality::Image => image_to_spec(&read_pgm(&path)?, config, id)?,
        EntryModality::Video => {
            let stack = read_frame_dir(&path)?;
            let strip = strip_wise(&stack, stack.width() / 2)?;
            image_to_spec(&strip, config, id)?
        }
    };
    Ok(normalize(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_is_a_selection() {
        let img = Image::new(2, 3, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let big = resize_nearest(&img, 4, 6).unwrap();
        assert_eq!(big.at(0, 0), 0.0);
        assert_eq!(big.at(3, 5), 0.5);
        assert_eq!(big.at(2, 2), 0.4);
        assert!(big.data.iter().all(|v| img.data.contains(v)));
        let small = resize_nearest(&big, 2, 3).unwrap();
        assert_eq!(small, img);
    }
}
