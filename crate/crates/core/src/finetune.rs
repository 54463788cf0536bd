//! Supervised fine-tuning: encoder plus a linear head over mean-pooled
//! tokens, trained with cross-entropy on seven behavior classes.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::mae::{LrSchedule, ModelParams, TrainState, N_CLASSES};
use crate::par::Exec;
use crate::patching::{floor_count, patchify, PatchGrid};
use crate::seed;
use crate::{Error, Result};

/// Crowd behaviors, declared from highest to lowest priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorClass {
    Booing,
    Stomping,
    Cheering,
    Clapping,
    Moving,
    Active,
    Quiet,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; 7] = [
        BehaviorClass::Booing,
        BehaviorClass::Stomping,
        BehaviorClass::Cheering,
        BehaviorClass::Clapping,
        BehaviorClass::Moving,
        BehaviorClass::Active,
        BehaviorClass::Quiet,
    ];

    /// 0 is the most intense behavior.
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Option<Self> {
        Self::ALL.get(rank).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Booing => "booing",
            BehaviorClass::Stomping => "stomping",
            BehaviorClass::Cheering => "cheering",
            BehaviorClass::Clapping => "clapping",
            BehaviorClass::Moving => "moving",
            BehaviorClass::Active => "active",
            BehaviorClass::Quiet => "quiet",
        }
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| Error::Format(format!("unknown behavior class {s:?}")))
    }
}

/// One minute of vibration with its single label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub spectrogram: Spectrogram,
    pub label: BehaviorClass,
    pub minute_index: u32,
    pub venue_id: String,
}

pub const PROB_EPS: f64 = 1e-12;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `-ln p(label)`, with the probability clamped below at 1e-12.
pub fn ce_loss(distribution: &[f64], label: BehaviorClass) -> f64 {
    -distribution[label.rank()].max(PROB_EPS).ln()
}

pub fn argmax(p: &[f64]) -> usize {
    (0..p.len())
        .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Keeps `floor(keep_ratio × n)` patch indices chosen uniformly without
/// replacement, returned in ascending order.
pub fn patch_drop(n_patches: usize, keep_ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidRatio {
            value: keep_ratio,
            reason: "keep ratio must lie in (0, 1]",
        });
    }
    if keep_ratio == 1.0 {
        return Ok((0..n_patches).collect());
    }
    let keep = floor_count(keep_ratio, n_patches);
    if keep == 0 {
        return Err(Error::InvalidRatio {
            value: keep_ratio,
            reason: "keep ratio leaves no patches",
        });
    }
    let mut kept = index::sample(&mut seed::rng(seed), n_patches, keep).into_vec();
    kept.sort_unstable();
    Ok(kept)
}

struct HeadCache {
    pooled: Vec<f64>,
    n_tokens: usize,
}

fn head_forward(params: &ModelParams, encoded: &[f64]) -> Result<(Vec<f64>, HeadCache)> {
    let head = params
        .head
        .as_ref()
        .ok_or_else(|| Error::ShapeMismatch("model has no classifier head".into()))?;
    let d = params.config.embed_dim;
    let n = encoded.len() / d;
    let mut pooled = vec![0.0; d];
    for row in encoded.chunks_exact(d) {
        pooled.iter_mut().zip(row).for_each(|(p, v)| *p += v / n as f64);
    }
    let logits = head.linear.forward(&pooled, 1);
    Ok((logits, HeadCache { pooled, n_tokens: n }))
}

fn grid_for(params: &ModelParams, spec: &Spectrogram) -> Result<PatchGrid> {
    let c = &params.config;
    let grid = patchify(spec, c.patch_h, c.patch_w)
        .map_err(|e| Error::IncompatiblePretraining(e.to_string()))?;
    params
        .check_grid(&grid)
        .map_err(|e| Error::IncompatiblePretraining(e.to_string()))?;
    Ok(grid)
}

/// Class probabilities for one spectrogram using every patch.
pub fn classify(params: &ModelParams, spec: &Spectrogram) -> Result<Vec<f64>> {
    let grid = grid_for(params, spec)?;
    let all: Vec<usize> = (0..grid.n_patches()).collect();
    classify_tokens(params, &grid, &all)
}

fn classify_tokens(params: &ModelParams, grid: &PatchGrid, kept: &[usize]) -> Result<Vec<f64>> {
    let (enc, _) = params.encode_tokens(grid, kept);
    let (logits, _) = head_forward(params, &enc)?;
    Ok(softmax(&logits))
}

/// Cross-entropy and its gradient for one clip restricted to `kept` patches.
pub fn classify_backward(
    params: &ModelParams,
    grid: &PatchGrid,
    kept: &[usize],
    label: BehaviorClass,
    weight: f64,
) -> Result<(f64, Vec<f64>, ModelParams)> {
    let (enc, enc_cache) = params.encode_tokens(grid, kept);
    let (logits, hc) = head_forward(params, &enc)?;
    let p = softmax(&logits);
    let loss = weight * ce_loss(&p, label);
    let mut dlogits = p.clone();
    dlogits[label.rank()] -= 1.0;
    dlogits.iter_mut().for_each(|v| *v *= weight);

    let mut grads = params.zeros_like();
    let head = params.head.as_ref().expect("head checked in forward");
    let gh = &mut grads.head.as_mut().expect("zeros_like keeps head").linear;
    let dpooled = head.linear.backward(&hc.pooled, &dlogits, 1, gh);
    let d = params.config.embed_dim;
    let mut denc = vec![0.0; hc.n_tokens * d];
    for row in denc.chunks_exact_mut(d) {
        row.iter_mut().zip(&dpooled).for_each(|(a, b)| *a = b / hc.n_tokens as f64);
    }
    params.encode_backward(&enc_cache, &denc, &mut grads);
    Ok((loss, p, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Head learning rate; the encoder uses `lr × encoder_lr_scale`.
    pub lr: f64,
    pub encoder_lr_scale: f64,
    pub freeze_encoder: bool,
    pub weight_decay: f64,
    pub keep_ratio: f64,
    /// Fraction of kept patches whose contents are zeroed (0 disables).
    pub mask_augment: f64,
    /// Weight each clip's loss by inverse class frequency.
    pub class_weighting: bool,
    pub allow_missing_classes: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 10,
            lr: 1e-3,
            encoder_lr_scale: 0.1,
            freeze_encoder: false,
            weight_decay: 0.05,
            keep_ratio: 1.0,
            mask_augment: 0.0,
            class_weighting: false,
            allow_missing_classes: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutput {
    pub params: ModelParams,
    pub epochs: Vec<EpochMetrics>,
}

fn class_weights(train: &[LabeledClip], enabled: bool) -> [f64; N_CLASSES] {
    if !enabled {
        return [1.0; N_CLASSES];
    }
    let mut counts = [0usize; N_CLASSES];
    for c in train {
        counts[c.label.rank()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let mut w = [0.0; N_CLASSES];
    for (wi, &c) in w.iter_mut().zip(&counts) {
        if c > 0 {
            *wi = train.len() as f64 / (present * c as f64);
        }
    }
    w
}

/// Fine-tunes `pretrained`'s encoder with a fresh head. Decoder tensors
/// are never touched.
pub fn finetune(
    exec: Exec,
    pretrained: &ModelParams,
    train: &[LabeledClip],
    config: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    let first = train.first().ok_or(Error::EmptySet("training set"))?;
    let grids: Vec<PatchGrid> = train
        .iter()
        .map(|c| {
            if c.spectrogram.shape() != first.spectrogram.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "training set mixes {:?} and {:?} spectrograms",
                    first.spectrogram.shape(),
                    c.spectrogram.shape()
                )));
            }
            grid_for(pretrained, &c.spectrogram)
        })
        .collect::<Result<_>>()?;
    if !config.allow_missing_classes {
        for class in BehaviorClass::ALL {
            if !train.iter().any(|c| c.label == class) {
                return Err(Error::MissingClass(class.to_string()));
            }
        }
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.mask_augment) {
        return Err(Error::InvalidRatio {
            value: config.mask_augment,
            reason: "mask_augment must lie in [0, 1)",
        });
    }

    let mut params = pretrained.clone();
    params.attach_head(seed::derive(config.seed, "finetune/head"));
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = LrSchedule {
        base_lr: config.lr,
        min_lr: 0.0,
        warmup_steps: 0,
        total_steps: (steps_per_epoch * config.epochs) as u64,
    };
    let mut state = TrainState::new(params, schedule, config.weight_decay, config.seed);
    let weights = class_weights(train, config.class_weighting);
    let lr_scale = |name: &str| -> Option<f64> {
        if name.starts_with("head.") {
            Some(1.0)
        } else if name.starts_with("encoder.") && !config.freeze_encoder {
            Some(config.encoder_lr_scale)
        } else {
            None
        }
    };

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::child_rng(config.seed, &format!("finetune/order/{epoch}")));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let per = exec.try_map(chunk, |&i| {
                let item_seed = seed::derive(config.seed, &format!("finetune/drop/{epoch}/{b}/{i}"));
                let kept = patch_drop(grids[i].n_patches(), config.keep_ratio, item_seed)?;
                let grid = if config.mask_augment > 0.0 {
                    augment(&grids[i], &kept, config.mask_augment, item_seed)?
                } else {
                    grids[i].clone()
                };
                let label = train[i].label;
                classify_backward(&state.params, &grid, &kept, label, weights[label.rank()])
                    .map(|(l, p, g)| (l, argmax(&p) == label.rank(), g))
            })?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grads = state.params.zeros_like();
            for (l, hit, g) in &per {
                loss_sum += l;
                correct += *hit as usize;
                grads.add_scaled(g, scale);
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged {
                    step: state.step,
                    what: "loss",
                });
            }
            state.apply_with(&grads, lr_scale)?;
        }
        history.push(EpochMetrics {
            epoch,
            loss: loss_sum / train.len() as f64,
            accuracy: correct as f64 / train.len() as f64,
        });
    }
    Ok(FinetuneOutput {
        params: state.params,
        epochs: history,
    })
}

fn augment(grid: &PatchGrid, kept: &[usize], ratio: f64, seed: u64) -> Result<PatchGrid> {
    let mut g = grid.clone();
    let n = floor_count(ratio, kept.len());
    let pd = g.patch_dim();
    let mut rng = seed::child_rng(seed, "augment");
    for j in index::sample(&mut rng, kept.len(), n) {
        let i = kept[j];
        g.data[i * pd..(i + 1) * pd].fill(0.0);
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub minute_index: u32,
    pub venue_id: String,
    pub predicted: BehaviorClass,
    pub probabilities: Vec<f64>,
    pub truth: BehaviorClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: BehaviorClass,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn predict(exec: Exec, params: &ModelParams, clips: &[LabeledClip]) -> Result<Vec<Prediction>> {
    exec.try_map(clips, |c| {
        let p = classify(params, &c.spectrogram)?;
        Ok(Prediction {
            minute_index: c.minute_index,
            venue_id: c.venue_id.clone(),
            predicted: BehaviorClass::ALL[argmax(&p)],
            probabilities: p,
            truth: c.label,
        })
    })
}

pub fn metrics(predictions: &[Prediction]) -> Metrics {
    let mut confusion = vec![vec![0usize; N_CLASSES]; N_CLASSES];
    for p in predictions {
        confusion[p.truth.rank()][p.predicted.rank()] += 1;
    }
    let correct: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
    let per_class = BehaviorClass::ALL
        .iter()
        .map(|&class| {
            let k = class.rank();
            let predicted: usize = (0..N_CLASSES).map(|t| confusion[t][k]).sum();
            let support: usize = confusion[k].iter().sum();
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            ClassMetrics {
                class,
                precision: ratio(confusion[k][k], predicted),
                recall: ratio(confusion[k][k], support),
                support,
            }
        })
        .collect();
    Metrics {
        accuracy: if predictions.is_empty() {
            0.0
        } else {
            correct as f64 / predictions.len() as f64
        },
        per_class,
        confusion,
    }
}

pub fn evaluate(exec: Exec, params: &ModelParams, clips: &[LabeledClip]) -> Result<(Metrics, Vec<Prediction>)> {
    let preds = predict(exec, params, clips)?;
    Ok((metrics(&preds), preds))
}

/// `minute_index,venue_id,predicted_class,p0..p6,true_class`.
pub fn predictions_csv(predictions: &[Prediction]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["minute_index".to_string(), "venue_id".into(), "predicted_class".into()];
    header.extend((0..N_CLASSES).map(|k| format!("p{k}")));
    header.push("true_class".into());
    w.write_record(&header)?;
    for p in predictions {
        let mut row = vec![p.minute_index.to_string(), p.venue_id.clone(), p.predicted.to_string()];
        row.extend(p.probabilities.iter().map(|v| format!("{v:.6}")));
        row.push(p.truth.to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_order_and_names() {
        assert_eq!(BehaviorClass::Booing.rank(), 0);
        assert_eq!(BehaviorClass::Quiet.rank(), 6);
        assert!(BehaviorClass::Cheering < BehaviorClass::Clapping);
        for c in BehaviorClass::ALL {
            assert_eq!(c.name().parse::<BehaviorClass>().unwrap(), c);
            assert_eq!(BehaviorClass::from_rank(c.rank()), Some(c));
        }
        assert!("roaring".parse::<BehaviorClass>().is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[0.0; 7]);
        assert!(p.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
        let p = softmax(&[10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(argmax(&p), 0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let mut onehot = vec![0.0; 7];
        onehot[2] = 1.0;
        assert_eq!(ce_loss(&onehot, BehaviorClass::Cheering), 0.0);
        let uniform = vec![1.0 / 7.0; 7];
        assert!((ce_loss(&uniform, BehaviorClass::Quiet) - 7f64.ln()).abs() < 1e-12);
        assert!((ce_loss(&uniform, BehaviorClass::Quiet) - 1.9459).abs() < 1e-4);
        let mut half = vec![0.5 / 6.0; 7];
        half[0] = 0.5;
        assert!((ce_loss(&half, BehaviorClass::Booing) - 2f64.ln()).abs() < 1e-12);
        // Zero probability is clamped, never infinite.
        let loss = ce_loss(&onehot, BehaviorClass::Booing);
        assert!(loss.is_finite());
        assert!((loss - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn patch_drop_counts() {
        assert_eq!(patch_drop(256, 0.5, 1).unwrap().len(), 128);
        assert_eq!(patch_drop(256, 1.0, 1).unwrap(), (0..256).collect::<Vec<_>>());
        assert_eq!(patch_drop(256, 0.5, 9).unwrap(), patch_drop(256, 0.5, 9).unwrap());
        assert_ne!(patch_drop(256, 0.5, 9).unwrap(), patch_drop(256, 0.5, 10).unwrap());
        for bad in [0.0, -0.5, 1.5] {
            assert!(patch_drop(256, bad, 1).is_err());
        }
        assert!(patch_drop(256, 0.001, 1).is_err());
    }

    #[test]
    fn metrics_from_confusion() {
        let mk = |t: BehaviorClass, p: BehaviorClass| Prediction {
            minute_index: 0,
            venue_id: "v".into(),
            predicted: p,
            probabilities: vec![1.0 / 7.0; 7],
            truth: t,
        };
        use BehaviorClass::*;
        let m = metrics(&[mk(Booing, Booing), mk(Booing, Quiet), mk(Quiet, Quiet)]);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion[0][6], 1);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert_eq!(m.per_class[6].precision, 0.5);
        let csv = predictions_csv(&[mk(Booing, Quiet)]).unwrap();
        assert!(csv.starts_with("minute_index,venue_id,predicted_class,p0,p1,p2,p3,p4,p5,p6,true_class\n"));
        assert!(csv.contains("0,v,quiet,0.142857"));
    }
}
