use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::ModelConfig;
use crate::dsp::Spectrogram;
use crate::par::Exec;
use crate::patching::{make_mask, patchify, MaskPlan, PatchGrid};
use crate::seed;
use crate::{Error, Result};

/// Encoder output for the visible patches of one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    /// `indices.len() × dim`, row-major.
    pub data: Vec<f64>,
    pub dim: usize,
    /// Grid index of each token.
    pub indices: Vec<usize>,
    pub template: PatchGrid,
}

impl Encoded {
    pub fn n_tokens(&self) -> usize {
        self.indices.len()
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_plan(grid: &PatchGrid, plan: &MaskPlan) -> Result<()> {
    if plan.n_patches() != grid.n_patches() {
        return Err(Error::ShapeMismatch(format!(
            "mask plan covers {} patches, grid has {}",
            plan.n_patches(),
            grid.n_patches()
        )));
    }
    if plan.n_visible() == 0 {
        return Err(Error::ShapeMismatch("mask plan leaves no visible patch".into()));
    }
    Ok(())
}

/// Encodes the visible patches only.
pub fn encode(params: &ModelParams, grid: &PatchGrid, plan: &MaskPlan) -> Result<Encoded> {
    params.check_grid(grid)?;
    check_plan(grid, plan)?;
    let indices = plan.visible_indices();
    let (data, _) = params.encode_tokens(grid, &indices);
    Ok(Encoded {
        data,
        dim: params.config.embed_dim,
        indices,
        template: grid.clone(),
    })
}

/// Reconstructs every patch position from an encoding made with `plan`.
pub fn decode(params: &ModelParams, encoded: &Encoded, plan: &MaskPlan) -> Result<PatchGrid> {
    if encoded.indices != plan.visible_indices() || encoded.dim != params.config.embed_dim {
        return Err(Error::ShapeMismatch(
            "encoding was not produced with this mask plan and model".into(),
        ));
    }
    let t = &encoded.template;
    let (pred, _) = params.decode_tokens(&encoded.data, plan, t.rows, t.cols);
    t.with_data(pred)
}

/// Full forward pass: the decoder's prediction for every patch.
pub fn reconstruct(params: &ModelParams, grid: &PatchGrid, plan: &MaskPlan) -> Result<PatchGrid> {
    decode(params, &encode(params, grid, plan)?, plan)
}

fn check_same(a: &PatchGrid, b: &PatchGrid) -> Result<()> {
    if (a.rows, a.cols, a.patch_h, a.patch_w) != (b.rows, b.cols, b.patch_h, b.patch_w)
        || a.data.len() != b.data.len()
    {
        return Err(Error::ShapeMismatch("grids differ in shape".into()));
    }
    Ok(())
}

/// Mean squared error over the cells of masked patches only.
pub fn recon_loss(original: &PatchGrid, recon: &PatchGrid, plan: &MaskPlan) -> Result<f64> {
    check_same(original, recon)?;
    if plan.n_patches() != original.n_patches() {
        return Err(Error::ShapeMismatch("mask plan does not match grid".into()));
    }
    let masked = plan.masked_indices();
    if masked.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = masked
        .iter()
        .map(|&i| {
            original
                .patch(i)
                .iter()
                .zip(recon.patch(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    Ok(sum / (masked.len() * original.patch_dim()) as f64)
}

/// Mean squared error over every cell.
pub fn full_mse(original: &PatchGrid, recon: &PatchGrid) -> Result<f64> {
    check_same(original, recon)?;
    let sum: f64 = original
        .data
        .iter()
        .zip(&recon.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / original.data.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossRegion {
    /// Only masked patches contribute.
    #[default]
    Masked,
    /// Every patch contributes.
    Full,
}

/// One training example: a grid and the mask applied to it.
#[derive(Clone, Debug)]
pub struct MaskedSample {
    pub grid: PatchGrid,
    pub plan: MaskPlan,
}

pub type Batch = [MaskedSample];

fn loss_weights(plan: &MaskPlan, region: LossRegion) -> (Vec<usize>, f64) {
    let rows: Vec<usize> = match region {
        LossRegion::Masked => plan.masked_indices(),
        LossRegion::Full => (0..plan.n_patches()).collect(),
    };
    let n = rows.len().max(1) as f64;
    (rows, n)
}

/// Forward-only loss for one sample.
pub fn sample_loss(params: &ModelParams, sample: &MaskedSample, region: LossRegion) -> Result<f64> {
    let recon = reconstruct(params, &sample.grid, &sample.plan)?;
    match region {
        LossRegion::Masked => recon_loss(&sample.grid, &recon, &sample.plan),
        LossRegion::Full => full_mse(&sample.grid, &recon),
    }
}

/// Loss and parameter gradients for one sample.
pub fn backward(params: &ModelParams, sample: &MaskedSample, region: LossRegion) -> Result<(f64, ModelParams)> {
    let grid = &sample.grid;
    let plan = &sample.plan;
    params.check_grid(grid)?;
    check_plan(grid, plan)?;
    let visible = plan.visible_indices();
    let (enc, enc_cache) = params.encode_tokens(grid, &visible);
    let (pred, dec_cache) = params.decode_tokens(&enc, plan, grid.rows, grid.cols);

    let pd = grid.patch_dim();
    let (rows, n) = loss_weights(plan, region);
    let denom = n * pd as f64;
    let mut dpred = vec![0.0; pred.len()];
    let mut loss = 0.0;
    for &i in &rows {
        for j in i * pd..(i + 1) * pd {
            let diff = pred[j] - grid.data[j];
            loss += diff * diff;
            dpred[j] = 2.0 * diff / denom;
        }
    }
    loss /= denom;

    let mut grads = params.zeros_like();
    let denc = params.decode_backward(&dec_cache, &dpred, &mut grads);
    params.encode_backward(&enc_cache, &denc, &mut grads);
    Ok((loss, grads))
}

/// Mean loss and mean gradient over a batch. Per-sample work runs under
/// `exec`; the reduction is sequential in batch order.
pub fn batch_gradients(
    exec: Exec,
    params: &ModelParams,
    batch: &Batch,
    region: LossRegion,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::EmptySet("batch"));
    }
    let per = exec.try_map(batch, |s| backward(params, s, region))?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        total.add_scaled(g, scale);
    }
    Ok((loss * scale, total))
}

/// Repeated constant-rate steps on one fixed batch, returning the final
/// parameters and the loss before each step.
pub fn fit_batch(
    exec: Exec,
    params: ModelParams,
    batch: &Batch,
    region: LossRegion,
    steps: u64,
    lr: f64,
) -> Result<(ModelParams, Vec<f64>)> {
    let mut state = TrainState::new(params, LrSchedule::constant(lr), 0.0, 0);
    let mut losses = Vec::with_capacity(steps as usize);
    for step in 0..steps {
        let (loss, grads) = batch_gradients(exec, &state.params, batch, region)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, what: "loss" });
        }
        losses.push(loss);
        state.apply(&grads)?;
    }
    Ok((state.params, losses))
}

/// Cosine decay from `base_lr` to `min_lr` after a linear warmup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            min_lr: 0.0,
            warmup_steps: 0,
            total_steps: 1000,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            min_lr: lr,
            warmup_steps: 0,
            total_steps: 1,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Adam with decoupled weight decay. Decay applies to `*.weight` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub step: u64,
    pub schedule: LrSchedule,
    pub opt: AdamW,
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: ModelParams, schedule: LrSchedule, weight_decay: f64, seed: u64) -> Self {
        let opt = AdamW::new(&params, weight_decay);
        Self {
            params,
            step: 0,
            schedule,
            opt,
            seed,
        }
    }

    /// One AdamW update of every tensor.
    pub fn apply(&mut self, grads: &ModelParams) -> Result<()> {
        self.apply_with(grads, |_| Some(1.0))
    }

    /// One AdamW update where `lr_scale(name)` gives each tensor's learning
    /// rate multiplier, or `None` to leave the tensor and its moments as is.
    pub fn apply_with(&mut self, grads: &ModelParams, lr_scale: impl Fn(&str) -> Option<f64>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                what: "gradient",
            });
        }
        let lr = self.schedule.lr(self.step);
        let t = (self.step + 1) as i32;
        let opt = &mut self.opt;
        let bc1 = 1.0 - opt.beta1.powi(t);
        let bc2 = 1.0 - opt.beta2.powi(t);
        let gts = grads.tensors();
        for (k, (name, p)) in self.params.tensors_mut().into_iter().enumerate() {
            let Some(scale) = lr_scale(&name) else { continue };
            let g = &gts[k].1.data;
            let decay = if name.ends_with(".weight") { opt.weight_decay } else { 0.0 };
            let (m, v) = (&mut opt.m[k], &mut opt.v[k]);
            let step_lr = lr * scale;
            for i in 0..p.data.len() {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + opt.eps);
                p.data[i] -= step_lr * (update + decay * p.data[i]);
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub mask_ratio: f64,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub loss_region: LossRegion,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 8,
            mask_ratio: 0.8,
            lr: 1e-3,
            min_lr: 0.0,
            warmup_steps: 0,
            weight_decay: 0.05,
            loss_region: LossRegion::Masked,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.lr,
            min_lr: self.min_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.steps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub params: ModelParams,
    /// Batch-mean loss before each update.
    pub losses: Vec<f64>,
}

/// Patchifies a corpus, checking that every item has the same shape.
pub(crate) fn patchify_corpus(corpus: &[Spectrogram], config: &ModelConfig) -> Result<Vec<PatchGrid>> {
    let first = corpus.first().ok_or(Error::EmptySet("corpus"))?;
    corpus
        .iter()
        .map(|s| {
            if s.shape() != first.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "corpus mixes {:?} and {:?} spectrograms ({})",
                    first.shape(),
                    s.shape(),
                    s.source_id
                )));
            }
            patchify(s, config.patch_h, config.patch_w)
        })
        .collect()
}

/// Index order for step-based minibatching: a fresh seeded permutation of
/// the corpus every epoch.
pub(crate) struct EpochSampler {
    n: usize,
    seed: u64,
    label: &'static str,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    pub fn new(n: usize, seed: u64, label: &'static str) -> Self {
        Self {
            n,
            seed,
            label,
            epoch: 0,
            order: Vec::new(),
            pos: n,
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        (0..size)
            .map(|_| {
                if self.pos == self.n {
                    let mut rng = seed::child_rng(self.seed, &format!("{}/order/{}", self.label, self.epoch));
                    self.order = (0..self.n).collect();
                    self.order.shuffle(&mut rng);
                    self.epoch += 1;
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

/// Masked-autoencoder pretraining. Fully determined by the corpus,
/// `model_config.seed` (initialization) and `config.seed` (batch order and
/// masks).
pub fn pretrain(
    exec: Exec,
    corpus: &[Spectrogram],
    model_config: &ModelConfig,
    config: &PretrainConfig,
) -> Result<PretrainOutput> {
    let grids = patchify_corpus(corpus, model_config)?;
    let params = ModelParams::init(model_config)?;
    params.check_grid(&grids[0])?;
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    let mut state = TrainState::new(params, config.schedule(), config.weight_decay, config.seed);
    let mut sampler = EpochSampler::new(grids.len(), config.seed, "pretrain");
    let mut losses = Vec::with_capacity(config.steps as usize);
    for step in 0..config.steps {
        let batch = sampler
            .next_batch(config.batch_size)
            .into_iter()
            .enumerate()
            .map(|(k, i)| {
                let mseed = seed::derive(config.seed, &format!("pretrain/mask/{step}/{k}"));
                Ok(MaskedSample {
                    grid: grids[i].clone(),
                    plan: make_mask(grids[i].n_patches(), config.mask_ratio, mseed)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = batch_gradients(exec, &state.params, &batch, config.loss_region)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, what: "loss" });
        }
        losses.push(loss);
        state.apply(&grads)?;
    }
    Ok(PretrainOutput {
        params: state.params,
        losses,
    })
}

pub fn loss_curve_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}
