use std::path::Path;

use image::{GrayImage, ImageFormat};
use rand::seq::index::sample;

use crate::seed;
use crate::{Error, Result};

/// Row-major grayscale grid with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "image {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Image>,
    pub fps: f64,
}

impl FrameStack {
    pub fn new(frames: Vec<Image>, fps: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame stack needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {fps}")));
        }
        let (h, w) = (frames[0].rows, frames[0].cols);
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| (f.rows, f.cols) != (h, w)) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} is {}x{}, expected {h}x{w}",
                f.rows, f.cols
            )));
        }
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].rows
    }

    pub fn width(&self) -> usize {
        self.frames[0].cols
    }
}

/// Column `column` of every frame, one frame per output row.
pub fn strip_wise(stack: &FrameStack, column: usize) -> Result<Image> {
    let (h, w) = (stack.height(), stack.width());
    if column >= w {
        return Err(Error::OutOfRange(format!("column {column} outside width {w}")));
    }
    let data = stack
        .frames
        .iter()
        .flat_map(|f| (0..h).map(move |r| f.at(r, column)))
        .collect();
    Image::new(stack.len(), h, data)
}

/// The given pixels of every frame, one frame per output row and one pixel
/// per output column.
pub fn pixel_wise(stack: &FrameStack, pixels: &[(usize, usize)]) -> Result<Image> {
    if pixels.is_empty() {
        return Err(Error::InvalidConfig("pixel_wise needs at least one pixel".into()));
    }
    let (h, w) = (stack.height(), stack.width());
    if let Some(&(r, c)) = pixels.iter().find(|&&(r, c)| r >= h || c >= w) {
        return Err(Error::OutOfRange(format!("pixel ({r}, {c}) outside {h}x{w}")));
    }
    let data = stack
        .frames
        .iter()
        .flat_map(|f| pixels.iter().map(move |&(r, c)| f.at(r, c)))
        .collect();
    Image::new(stack.len(), pixels.len(), data)
}

/// `n` distinct pixel coordinates drawn uniformly, row-major sorted.
pub fn sample_pixels(height: usize, width: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let total = height * width;
    if n == 0 || n > total {
        return Err(Error::OutOfRange(format!("cannot sample {n} of {total} pixels")));
    }
    let mut idx = sample(&mut seed::rng(seed), total, n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| (i / width, i % width)).collect())
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.pixels().map(|p| p.0[0] as f64 / u16::MAX as f64).collect();
    Image::new(h as usize, w as usize, data)
}

/// Writes an 8-bit binary PGM, clamping values to [0, 1].
pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    let pixels = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let gray = GrayImage::from_raw(img.cols as u32, img.rows as u32, pixels)
        .ok_or_else(|| Error::ShapeMismatch("image buffer size".into()))?;
    gray.save_with_format(path, ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Loads `*.pgm` files in lexical order plus the frame rate from a `fps`
/// sidecar file holding a single number.
pub fn read_frame_dir(dir: &Path) -> Result<FrameStack> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
            paths.push(p);
        }
    }
    paths.sort();
    let fps_path = dir.join("fps");
    let text = std::fs::read_to_string(&fps_path).map_err(|e| Error::io(&fps_path, e))?;
    let fps: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("{}: not a number: {:?}", fps_path.display(), text.trim())))?;
    let frames = paths.iter().map(|p| read_pgm(p)).collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_of(n: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> FrameStack {
        let frames = (0..n)
            .map(|t| {
                let data = (0..h * w).map(|i| f(t, i / w, i % w)).collect();
                Image::new(h, w, data).unwrap()
            })
            .collect();
        FrameStack::new(frames, 30.0).unwrap()
    }

    #[test]
    fn strip_shapes_and_trace() {
        let s = stack_of(10, 8, 8, |t, r, c| (t * 64 + r * 8 + c) as f64);
        let img = strip_wise(&s, 3).unwrap();
        assert_eq!((img.rows, img.cols), (10, 8));
        for t in 0..10 {
            for r in 0..8 {
                assert_eq!(img.at(t, r), s.frames[t].at(r, 3));
            }
        }
        let still = stack_of(6, 5, 4, |_, r, c| (r + c) as f64 / 10.0);
        let img = strip_wise(&still, 1).unwrap();
        for t in 1..6 {
            assert_eq!(&img.data[t * 5..t * 5 + 5], &img.data[..5]);
        }
        // A bright dot sliding down column 2 draws a diagonal.
        let moving = stack_of(8, 8, 5, |t, r, c| if r == t && c == 2 { 1.0 } else { 0.0 });
        let img = strip_wise(&moving, 2).unwrap();
        for t in 0..8 {
            for r in 0..8 {
                assert_eq!(img.at(t, r), if r == t { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(strip_wise(&moving, 5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn pixel_shapes_and_toggle() {
        let s = stack_of(10, 8, 8, |_, _, _| 0.25);
        let px = sample_pixels(8, 8, 32, 9).unwrap();
        let img = pixel_wise(&s, &px).unwrap();
        assert_eq!((img.rows, img.cols), (10, 32));
        assert!(img.data.iter().all(|&v| v == 0.25));
        let toggle = stack_of(6, 3, 3, |t, r, c| if (r, c) == (1, 2) { (t % 2) as f64 } else { 0.5 });
        let img = pixel_wise(&toggle, &[(1, 2), (0, 0)]).unwrap();
        for t in 0..6 {
            assert_eq!(img.at(t, 0), (t % 2) as f64);
            assert_eq!(img.at(t, 1), 0.5);
        }
        assert!(pixel_wise(&toggle, &[(3, 0)]).is_err());
        assert!(pixel_wise(&toggle, &[]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let a = sample_pixels(16, 16, 40, 1).unwrap();
        assert_eq!(a, sample_pixels(16, 16, 40, 1).unwrap());
        assert_ne!(a, sample_pixels(16, 16, 40, 2).unwrap());
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 40);
        assert!(sample_pixels(2, 2, 5, 0).is_err());
    }

    #[test]
    fn stack_invariants() {
        let one = vec![Image::filled(2, 2, 0.0)];
        assert!(FrameStack::new(one, 30.0).is_err());
        let ragged = vec![Image::filled(2, 2, 0.0), Image::filled(2, 3, 0.0)];
        assert!(FrameStack::new(ragged, 30.0).is_err());
    }

    #[test]
    fn frame_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for t in 0..3 {
            let img = Image::new(2, 3, (0..6).map(|i| ((i + t) % 6) as f64 / 5.0).collect()).unwrap();
            write_pgm(&dir.path().join(format!("f{t:03}.pgm")), &img).unwrap();
        }
        std::fs::write(dir.path().join("fps"), "29.97\n").unwrap();
        let s = read_frame_dir(dir.path()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!((s.height(), s.width()), (2, 3));
        assert_eq!(s.fps, 29.97);
        let expect = ((0 + 1) % 6) as f64 / 5.0;
        assert!((s.frames[1].at(0, 0) - expect).abs() < 1.0 / 255.0);
    }
}
