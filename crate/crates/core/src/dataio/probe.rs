use crate::dsp::Spectrogram;
use crate::finetune::{argmax, softmax, BehaviorClass, LabeledClip};

/// Time-averaged mel profile of a spectrogram.
pub fn mean_spectrum_features(spec: &Spectrogram) -> Vec<f64> {
    let mut out = vec![0.0; spec.n_mels];
    for t in 0..spec.n_frames {
        for (o, v) in out.iter_mut().zip(spec.frame(t)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= spec.n_frames as f64);
    out
}

/// Eval accuracy of a softmax-regression probe trained on the mean mel
/// profile of `train`. Features are standardized with train statistics.
pub fn mean_spectrum_probe_accuracy(train: &[LabeledClip], eval: &[LabeledClip]) -> f64 {
    if train.is_empty() || eval.is_empty() {
        return 0.0;
    }
    let feats = |set: &[LabeledClip]| -> Vec<Vec<f64>> {
        set.iter().map(|c| mean_spectrum_features(&c.spectrogram)).collect()
    };
    let (mut xtr, mut xev) = (feats(train), feats(eval));
    let d = xtr[0].len();
    let n = xtr.len() as f64;
    for j in 0..d {
        let mean = xtr.iter().map(|x| x[j]).sum::<f64>() / n;
        let var = xtr.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-12);
        for x in xtr.iter_mut().chain(xev.iter_mut()) {
            x[j] = (x[j] - mean) / sd;
        }
    }

    let k = BehaviorClass::ALL.len();
    let mut w = vec![vec![0.0; d + 1]; k];
    let (lr, l2) = (0.5, 1e-3);
    for _ in 0..2000 {
        let mut g = vec![vec![0.0; d + 1]; k];
        for (x, clip) in xtr.iter().zip(train) {
            let p = softmax(&logits(&w, x));
            for (c, gc) in g.iter_mut().enumerate() {
                let err = p[c] - if c == clip.label.rank() { 1.0 } else { 0.0 };
                for j in 0..d {
                    gc[j] += err * x[j];
                }
                gc[d] += err;
            }
        }
        for (wc, gc) in w.iter_mut().zip(&g) {
            for j in 0..=d {
                let reg = if j < d { l2 * wc[j] } else { 0.0 };
                wc[j] -= lr * (gc[j] / n + reg);
            }
        }
    }
    let correct = xev
        .iter()
        .zip(eval)
        .filter(|(x, c)| argmax(&logits(&w, x)) == c.label.rank())
        .count();
    correct as f64 / eval.len() as f64
}

fn logits(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    w.iter()
        .map(|wc| wc[d] + wc[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}
