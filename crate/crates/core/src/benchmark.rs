//! End-to-end experiments on the synthetic corpus: pretrained-vs-scratch
//! transfer and the patch-size ablation.

use serde::{Deserialize, Serialize};

use crate::dataio::{gen_synthetic_corpus, SyntheticConfig, SyntheticCorpus};
use crate::dsp::Spectrogram;
use crate::finetune::{evaluate, finetune, FinetuneConfig};
use crate::mae::{recon_loss, reconstruct, pretrain, ModelConfig, ModelParams, PretrainConfig};
use crate::par::Exec;
use crate::patching::{make_mask, patchify};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            model: ModelConfig {
                dec_window: 64,
                ..ModelConfig::tiny()
            },
            pretrain: PretrainConfig {
                steps: 1000,
                ..PretrainConfig::default()
            },
            finetune: FinetuneConfig {
                epochs: 30,
                lr: 1e-2,
                keep_ratio: 0.5,
                ..FinetuneConfig::default()
            },
        }
    }
}

impl TransferConfig {
    /// Every seed in the config derived from one root.
    pub fn seeded(&self, root: u64) -> Self {
        let mut c = self.clone();
        c.synthetic.seed = seed::derive(root, "synthetic");
        c.model.seed = seed::derive(root, "model");
        c.pretrain.seed = seed::derive(root, "pretrain");
        c.finetune.seed = seed::derive(root, "finetune");
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub seed: u64,
    pub pretrained_accuracy: f64,
    pub scratch_accuracy: f64,
    pub pretrain_first_loss: f64,
    pub pretrain_final_loss: f64,
}

impl TransferRun {
    pub fn gain(&self) -> f64 {
        self.pretrained_accuracy - self.scratch_accuracy
    }
}

/// Fine-tunes a pretrained and a freshly initialized model with the same
/// fine-tuning config and evaluates both on the held-out split.
pub fn compare_transfer(
    exec: Exec,
    corpus: &SyntheticCorpus,
    pretrained: &ModelParams,
    config: &TransferConfig,
) -> Result<(f64, f64)> {
    let scratch = ModelParams::init(&config.model)?;
    let mut acc = [0.0; 2];
    for (a, start) in acc.iter_mut().zip([pretrained, &scratch]) {
        let out = finetune(exec, start, &corpus.train, &config.finetune)?;
        *a = evaluate(exec, &out.params, &corpus.eval)?.0.accuracy;
    }
    Ok((acc[0], acc[1]))
}

/// One full seed of the transfer experiment.
pub fn transfer_run(exec: Exec, config: &TransferConfig, root: u64) -> Result<TransferRun> {
    let cfg = config.seeded(root);
    let corpus = gen_synthetic_corpus(exec, &cfg.synthetic)?;
    let pre = pretrain(exec, &corpus.pretrain, &cfg.model, &cfg.pretrain)?;
    let (pretrained_accuracy, scratch_accuracy) = compare_transfer(exec, &corpus, &pre.params, &cfg)?;
    Ok(TransferRun {
        seed: root,
        pretrained_accuracy,
        scratch_accuracy,
        pretrain_first_loss: pre.losses[0],
        pretrain_final_loss: *pre.losses.last().unwrap_or(&f64::NAN),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Mean masked reconstruction loss on `items` with per-item mask seeds
/// `0, 1, ...`.
pub fn heldout_loss(exec: Exec, params: &ModelParams, items: &[Spectrogram], mask_ratio: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptySet("held-out set"));
    }
    let c = &params.config;
    let idx: Vec<usize> = (0..items.len()).collect();
    let losses = exec.try_map(&idx, |&i| {
        let grid = patchify(&items[i], c.patch_h, c.patch_w)?;
        let plan = make_mask(grid.n_patches(), mask_ratio, i as u64)?;
        recon_loss(&grid, &reconstruct(params, &grid, &plan)?, &plan)
    })?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub patch: (usize, usize),
    pub final_train_loss: f64,
    pub heldout_loss: f64,
}

/// Pretrains one model per patch size on `train` for the same number of
/// steps and scores each on `heldout`.
pub fn patch_ablation(
    exec: Exec,
    train: &[Spectrogram],
    heldout: &[Spectrogram],
    model: &ModelConfig,
    pretrain_cfg: &PretrainConfig,
    patches: &[(usize, usize)],
    root: u64,
) -> Result<Vec<AblationRun>> {
    patches
        .iter()
        .map(|&(ph, pw)| {
            let m = ModelConfig {
                patch_h: ph,
                patch_w: pw,
                seed: seed::derive(root, "ablation/model"),
                ..model.clone()
            };
            let p = PretrainConfig {
                seed: seed::derive(root, "ablation/pretrain"),
                ..pretrain_cfg.clone()
            };
            let out = pretrain(exec, train, &m, &p)?;
            let tail = &out.losses[out.losses.len().saturating_sub(20)..];
            Ok(AblationRun {
                seed: root,
                patch: (ph, pw),
                final_train_loss: tail.iter().sum::<f64>() / tail.len() as f64,
                heldout_loss: heldout_loss(exec, &out.params, heldout, p.mask_ratio)?,
            })
        })
        .collect()
}
