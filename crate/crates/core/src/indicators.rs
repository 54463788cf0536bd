//! Modality-selection indicators.
//!
//! Similarity is global-statistics SSIM between normalized spectrograms.
//! Diversity is the full-grid MSE between a spectrogram and its masked
//! reconstruction by a model pretrained on a reference modality.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::mae::{reconstruct, ModelParams};
use crate::par::Exec;
use crate::patching::{make_mask, patchify, unpatchify};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl SsimParams {
    pub fn for_range(l: f64) -> Self {
        Self {
            c1: (0.01 * l).powi(2),
            c2: (0.03 * l).powi(2),
            dynamic_range: l,
        }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

/// SSIM of two equal-length sample sets using whole-signal statistics.
pub fn ssim(x: &[f64], y: &[f64], p: &SsimParams) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "ssim inputs have {} and {} values",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    Ok((2.0 * mx * my + p.c1) * (2.0 * cxy + p.c2)
        / ((mx * mx + my * my + p.c1) * (vx + vy + p.c2)))
}

pub fn similarity(x: &Spectrogram, y: &Spectrogram, p: &SsimParams) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "similarity of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    ssim(&x.values, &y.values, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Pairing {
    /// `n_pairs` uniform cross-set pairs with replacement; `None` means
    /// `min(10000, |A|·|B|)`.
    Random { n_pairs: Option<usize>, seed: u64 },
    Exhaustive,
    /// Item `i` of one set against item `i` of the other.
    Identity,
}

impl Default for Pairing {
    fn default() -> Self {
        Pairing::Random {
            n_pairs: None,
            seed: 0,
        }
    }
}

pub const DEFAULT_MAX_PAIRS: usize = 10_000;

fn pairs(na: usize, nb: usize, pairing: Pairing) -> Result<Vec<(usize, usize)>> {
    Ok(match pairing {
        Pairing::Random { n_pairs, seed } => {
            let n = n_pairs.unwrap_or(DEFAULT_MAX_PAIRS.min(na * nb));
            if n == 0 {
                return Err(Error::InvalidConfig("n_pairs must be positive".into()));
            }
            let mut rng = seed::rng(seed);
            (0..n)
                .map(|_| (rng.random_range(0..na), rng.random_range(0..nb)))
                .collect()
        }
        Pairing::Exhaustive => (0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).collect(),
        Pairing::Identity => {
            if na != nb {
                return Err(Error::ShapeMismatch(format!(
                    "identity pairing of sets sized {na} and {nb}"
                )));
            }
            (0..na).map(|i| (i, i)).collect()
        }
    })
}

/// Mean SSIM over cross-set pairs.
pub fn dataset_similarity(
    exec: Exec,
    a: &[Spectrogram],
    b: &[Spectrogram],
    p: &SsimParams,
    pairing: Pairing,
) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptySet("first similarity set"));
    }
    if b.is_empty() {
        return Err(Error::EmptySet("second similarity set"));
    }
    let idx = pairs(a.len(), b.len(), pairing)?;
    let vals = exec.try_map(&idx, |&(i, j)| similarity(&a[i], &b[j], p))?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-item mean SSIM of each of `items` against every spectrogram in
/// `reference` (or a seeded sample of `max_refs` of them).
pub fn item_similarity(
    exec: Exec,
    items: &[Spectrogram],
    reference: &[Spectrogram],
    p: &SsimParams,
    max_refs: Option<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::EmptySet("similarity reference set"));
    }
    let refs: Vec<&Spectrogram> = match max_refs {
        Some(m) if m < reference.len() => {
            let mut idx = rand::seq::index::sample(&mut seed::rng(seed), reference.len(), m.max(1)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &reference[i]).collect()
        }
        _ => reference.iter().collect(),
    };
    exec.try_map(items, |x| {
        let mut sum = 0.0;
        for r in &refs {
            sum += similarity(x, r, p)?;
        }
        Ok(sum / refs.len() as f64)
    })
}

/// Anything that maps a spectrogram to a same-shape reconstruction.
pub trait Reconstructor: Sync {
    fn reconstruct(&self, spec: &Spectrogram) -> Result<Spectrogram>;
}

/// Masked-autoencoder reconstruction with a fixed evaluation mask. Visible
/// patches are copied from the input, masked ones come from the decoder.
pub struct MaeReconstructor<'a> {
    pub params: &'a ModelParams,
    pub mask_ratio: f64,
    pub mask_seed: u64,
}

impl<'a> MaeReconstructor<'a> {
    pub fn new(params: &'a ModelParams, mask_ratio: f64) -> Self {
        Self {
            params,
            mask_ratio,
            mask_seed: 0,
        }
    }
}

impl Reconstructor for MaeReconstructor<'_> {
    fn reconstruct(&self, spec: &Spectrogram) -> Result<Spectrogram> {
        let cfg = &self.params.config;
        let grid = patchify(spec, cfg.patch_h, cfg.patch_w)?;
        let plan = make_mask(grid.n_patches(), self.mask_ratio, self.mask_seed)?;
        let mut out = reconstruct(self.params, &grid, &plan)?;
        let pd = grid.patch_dim();
        for i in plan.visible_indices() {
            out.data[i * pd..(i + 1) * pd].copy_from_slice(grid.patch(i));
        }
        unpatchify(&out)
    }
}

pub fn mse(a: &Spectrogram, b: &Spectrogram) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.values.len() as f64;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Per-item full-grid reconstruction MSE.
pub fn item_diversity(exec: Exec, items: &[Spectrogram], model: &dyn Reconstructor) -> Result<Vec<f64>> {
    exec.try_map(items, |x| mse(x, &model.reconstruct(x)?))
}

pub fn diversity(exec: Exec, items: &[Spectrogram], model: &dyn Reconstructor) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptySet("diversity set"));
    }
    let v = item_diversity(exec, items, model)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];

    pub fn name(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Mid => "mid",
            Level::High => "high",
        }
    }
}

/// Splits items into `k` contiguous rank groups by ascending score. Ties
/// break on `ids`; earlier (lower) groups take the remainder. Returns item
/// indices per group.
pub fn sort_into_groups(scores: &[f64], ids: &[String], k: usize) -> Result<Vec<Vec<usize>>> {
    if scores.len() != ids.len() {
        return Err(Error::ShapeMismatch("scores and ids differ in length".into()));
    }
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::InvalidGroupCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| ids[a].cmp(&ids[b])));
    let (base, rem) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let len = base + usize::from(g < rem);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Tertiles by similarity, then tertiles by diversity inside each.
/// `cells[s][d]` holds item indices.
pub fn sort_nested(similarity: &[f64], diversity: &[f64], ids: &[String]) -> Result<Vec<Vec<Vec<usize>>>> {
    if similarity.len() != diversity.len() {
        return Err(Error::ShapeMismatch("similarity and diversity differ in length".into()));
    }
    if similarity.len() < 9 {
        return Err(Error::InvalidGroupCount { k: 9, n: similarity.len() });
    }
    sort_into_groups(similarity, ids, 3)?
        .into_iter()
        .map(|group| {
            let d: Vec<f64> = group.iter().map(|&i| diversity[i]).collect();
            let gid: Vec<String> = group.iter().map(|&i| ids[i].clone()).collect();
            Ok(sort_into_groups(&d, &gid, 3)?
                .into_iter()
                .map(|cell| cell.into_iter().map(|j| group[j]).collect())
                .collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemIndicators {
    pub source_id: String,
    pub similarity: f64,
    pub diversity: f64,
    pub similarity_group: Level,
    pub diversity_group: Level,
    /// Diversity tertile inside the item's similarity tertile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested_diversity_group: Option<Level>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub by_similarity: BTreeMap<Level, Vec<String>>,
    pub by_diversity: BTreeMap<Level, Vec<String>>,
    /// Keys are `"<similarity>/<diversity>"`.
    pub nested: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub dataset_id: String,
    pub n_items: usize,
    pub similarity_mean: f64,
    pub diversity_mean: f64,
    pub per_item: Vec<ItemIndicators>,
    pub groups: Groups,
}

impl IndicatorReport {
    /// Assembles a report from per-item scores. Nested groups are filled
    /// when there are at least 9 items.
    pub fn build(dataset_id: &str, ids: &[String], similarity: &[f64], diversity: &[f64]) -> Result<Self> {
        let n = ids.len();
        if similarity.len() != n || diversity.len() != n {
            return Err(Error::ShapeMismatch("per-item score lengths differ".into()));
        }
        if n < 3 {
            return Err(Error::InvalidGroupCount { k: 3, n });
        }
        let level_of = |groups: &[Vec<usize>]| {
            let mut lv = vec![Level::Low; n];
            for (g, members) in groups.iter().enumerate() {
                for &i in members {
                    lv[i] = Level::ALL[g];
                }
            }
            lv
        };
        let sim_groups = sort_into_groups(similarity, ids, 3)?;
        let div_groups = sort_into_groups(diversity, ids, 3)?;
        let (sim_lv, div_lv) = (level_of(&sim_groups), level_of(&div_groups));
        let mut nested_lv = vec![None; n];
        let mut groups = Groups::default();
        for (g, m) in sim_groups.iter().enumerate() {
            groups.by_similarity.insert(Level::ALL[g], m.iter().map(|&i| ids[i].clone()).collect());
        }
        for (g, m) in div_groups.iter().enumerate() {
            groups.by_diversity.insert(Level::ALL[g], m.iter().map(|&i| ids[i].clone()).collect());
        }
        if n >= 9 {
            for (s, row) in sort_nested(similarity, diversity, ids)?.iter().enumerate() {
                for (d, cell) in row.iter().enumerate() {
                    for &i in cell {
                        nested_lv[i] = Some(Level::ALL[d]);
                    }
                    let key = format!("{}/{}", Level::ALL[s].name(), Level::ALL[d].name());
                    groups.nested.insert(key, cell.iter().map(|&i| ids[i].clone()).collect());
                }
            }
        }
        let per_item = (0..n)
            .map(|i| ItemIndicators {
                source_id: ids[i].clone(),
                similarity: similarity[i],
                diversity: diversity[i],
                similarity_group: sim_lv[i],
                diversity_group: div_lv[i],
                nested_diversity_group: nested_lv[i],
            })
            .collect();
        Ok(Self {
            dataset_id: dataset_id.into(),
            n_items: n,
            similarity_mean: similarity.iter().sum::<f64>() / n as f64,
            diversity_mean: diversity.iter().sum::<f64>() / n as f64,
            per_item,
            groups,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "source_id",
            "similarity",
            "diversity",
            "similarity_group",
            "diversity_group",
            "nested_diversity_group",
        ])?;
        for it in &self.per_item {
            w.write_record([
                it.source_id.clone(),
                it.similarity.to_string(),
                it.diversity.to_string(),
                it.similarity_group.name().into(),
                it.diversity_group.name().into(),
                it.nested_diversity_group.map(|l| l.name()).unwrap_or("").into(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
