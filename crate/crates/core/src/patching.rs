//! Patch grids and random masking plans.
//!
//! Patches are ordered row-major over the patch grid with time as the major
//! axis: patch `i` covers frames `(i / cols) * patch_h ..` and mel bins
//! `(i % cols) * patch_w ..`. Each patch vector is itself row-major
//! (`patch_h` frames of `patch_w` bins).

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    /// `rows * cols` patches of `patch_h * patch_w` values each, concatenated.
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub rate_hz: f64,
    pub source_id: String,
}

impl PatchGrid {
    pub fn n_patches(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_h * self.patch_w
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.patch_dim();
        &self.data[i * d..(i + 1) * d]
    }

    /// `(row, col)` of patch `i` on the grid.
    pub fn position(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    pub fn check(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.patch_h == 0 || self.patch_w == 0 {
            return Err(Error::ShapeMismatch("patch grid has a zero dimension".into()));
        }
        if self.data.len() != self.n_patches() * self.patch_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} patches of {}",
                self.data.len(),
                self.n_patches(),
                self.patch_dim()
            )));
        }
        Ok(())
    }

    /// Same geometry with new contents.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        let g = PatchGrid {
            data,
            source_id: self.source_id.clone(),
            ..*self
        };
        g.check()?;
        Ok(g)
    }
}

pub fn patchify(spec: &Spectrogram, patch_h: usize, patch_w: usize) -> Result<PatchGrid> {
    if patch_h == 0
        || patch_w == 0
        || spec.n_frames % patch_h != 0
        || spec.n_mels % patch_w != 0
    {
        return Err(Error::PatchSizeMismatch {
            dims: spec.shape(),
            patch: (patch_h, patch_w),
        });
    }
    let (rows, cols) = (spec.n_frames / patch_h, spec.n_mels / patch_w);
    let mut data = Vec::with_capacity(spec.values.len());
    for r in 0..rows {
        for c in 0..cols {
            for dt in 0..patch_h {
                let start = (r * patch_h + dt) * spec.n_mels + c * patch_w;
                data.extend_from_slice(&spec.values[start..start + patch_w]);
            }
        }
    }
    Ok(PatchGrid {
        data,
        rows,
        cols,
        patch_h,
        patch_w,
        rate_hz: spec.rate_hz,
        source_id: spec.source_id.clone(),
    })
}

pub fn unpatchify(grid: &PatchGrid) -> Result<Spectrogram> {
    grid.check()?;
    let (n_frames, n_mels) = (grid.rows * grid.patch_h, grid.cols * grid.patch_w);
    let mut values = vec![0.0; n_frames * n_mels];
    for i in 0..grid.n_patches() {
        let (r, c) = grid.position(i);
        for (dt, row) in grid.patch(i).chunks_exact(grid.patch_w).enumerate() {
            let start = (r * grid.patch_h + dt) * n_mels + c * grid.patch_w;
            values[start..start + grid.patch_w].copy_from_slice(row);
        }
    }
    Spectrogram::new(values, n_frames, n_mels, grid.rate_hz, grid.source_id.clone())
}

/// Which patches the encoder sees.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlan {
    pub visible: Vec<bool>,
    pub mask_ratio: f64,
    pub seed: u64,
}

/// JSON form recorded in run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPlanRecord {
    pub n_patches: usize,
    pub mask_ratio: f64,
    pub seed: u64,
    pub masked_indices: Vec<usize>,
}

impl MaskPlan {
    pub fn n_patches(&self) -> usize {
        self.visible.len()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        (0..self.visible.len()).filter(|&i| self.visible[i]).collect()
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.visible.len()).filter(|&i| !self.visible[i]).collect()
    }

    pub fn n_visible(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn n_masked(&self) -> usize {
        self.n_patches() - self.n_visible()
    }

    pub fn to_record(&self) -> MaskPlanRecord {
        MaskPlanRecord {
            n_patches: self.n_patches(),
            mask_ratio: self.mask_ratio,
            seed: self.seed,
            masked_indices: self.masked_indices(),
        }
    }

    pub fn from_record(rec: &MaskPlanRecord) -> Result<Self> {
        let mut visible = vec![true; rec.n_patches];
        for &i in &rec.masked_indices {
            let slot = visible
                .get_mut(i)
                .ok_or_else(|| Error::OutOfRange(format!("masked index {i}")))?;
            *slot = false;
        }
        Ok(Self {
            visible,
            mask_ratio: rec.mask_ratio,
            seed: rec.seed,
        })
    }
}

/// `floor(ratio * n)`, tolerant of representation error just below an
/// integer (`0.29 * 100` is 28.999...).
pub(crate) fn floor_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Masks exactly `floor(mask_ratio * n_patches)` patches chosen uniformly
/// without replacement by a ChaCha8 generator seeded with `seed`.
pub fn make_mask(n_patches: usize, mask_ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::InvalidRatio {
            value: mask_ratio,
            reason: "mask ratio must lie strictly between 0 and 1",
        });
    }
    let n_masked = floor_count(mask_ratio, n_patches);
    let mut rng = seed::rng(seed);
    let mut visible = vec![true; n_patches];
    for i in index::sample(&mut rng, n_patches, n_masked) {
        visible[i] = false;
    }
    Ok(MaskPlan {
        visible,
        mask_ratio,
        seed,
    })
}
