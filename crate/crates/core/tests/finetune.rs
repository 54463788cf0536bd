use vila_core::dsp::Spectrogram;
use vila_core::finetune::*;
use vila_core::mae::{ModelConfig, ModelParams, N_CLASSES};
use vila_core::par::Exec;
use vila_core::Error;

fn config() -> ModelConfig {
    ModelConfig {
        dec_window: 64,
        ..ModelConfig::tiny()
    }
}

fn clip(i: usize, label: BehaviorClass) -> LabeledClip {
    let values = (0..128 * 32)
        .map(|k| (((k * 31 + i * 17) % 101) as f64 / 100.0 + label.rank() as f64 * 0.1).fract())
        .collect();
    LabeledClip {
        spectrogram: Spectrogram::new(values, 128, 32, 1000.0, format!("c{i}")).unwrap(),
        label,
        minute_index: i as u32,
        venue_id: "v".into(),
    }
}

fn balanced(n: usize) -> Vec<LabeledClip> {
    (0..n).map(|i| clip(i, BehaviorClass::ALL[i % 7])).collect()
}

#[test]
fn single_class_collapses() {
    let train: Vec<_> = (0..8).map(|i| clip(i, BehaviorClass::Clapping)).collect();
    let params = ModelParams::init(&config()).unwrap();
    let cfg = FinetuneConfig {
        epochs: 5,
        lr: 1e-2,
        keep_ratio: 0.5,
        allow_missing_classes: true,
        ..FinetuneConfig::default()
    };
    let out = finetune(Exec::default(), &params, &train, &cfg).unwrap();
    let eval: Vec<_> = (20..30).map(|i| clip(i, BehaviorClass::Clapping)).collect();
    let (m, preds) = evaluate(Exec::default(), &out.params, &eval).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert!(preds.iter().all(|p| p.predicted == BehaviorClass::Clapping));
    assert!(matches!(
        finetune(Exec::default(), &params, &train, &FinetuneConfig::default()),
        Err(Error::MissingClass(_))
    ));
}

#[test]
fn untrained_head_is_near_chance() {
    let eval = balanced(70);
    let mut accs = Vec::new();
    for seed in 0..5 {
        let mut params = ModelParams::init(&ModelConfig { seed, ..config() }).unwrap();
        params.attach_head(seed);
        accs.push(evaluate(Exec::default(), &params, &eval).unwrap().0.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 1.0 / 7.0).abs() <= 0.10, "{accs:?}");
}

#[test]
fn decoder_is_untouched_and_outputs_are_distributions() {
    let params = ModelParams::init(&config()).unwrap();
    let train = balanced(14);
    let cfg = FinetuneConfig {
        epochs: 2,
        keep_ratio: 0.5,
        mask_augment: 0.2,
        class_weighting: true,
        ..FinetuneConfig::default()
    };
    let out = finetune(Exec::default(), &params, &train, &cfg).unwrap();
    assert_eq!(out.epochs.len(), 2);
    for ((name, before), (_, after)) in params.tensors().into_iter().zip(out.params.tensors()) {
        if name.starts_with("decoder.") {
            assert_eq!(before, after, "{name} changed");
        }
    }
    let enc_changed = params
        .tensors()
        .into_iter()
        .zip(out.params.tensors())
        .any(|((n, a), (_, b))| n.starts_with("encoder.") && a != b);
    assert!(enc_changed);
    for c in &train {
        let p = classify(&out.params, &c.spectrogram).unwrap();
        assert_eq!(p.len(), N_CLASSES);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn incompatible_shapes_are_reported() {
    let mut params = ModelParams::init(&config()).unwrap();
    params.attach_head(0);
    let odd = Spectrogram::new(vec![0.5; 126 * 32], 126, 32, 1000.0, "odd").unwrap();
    assert!(matches!(classify(&params, &odd), Err(Error::IncompatiblePretraining(_))));
}

#[test]
fn patch_drop_counts() {
    assert_eq!(patch_drop(256, 0.5, 3).unwrap().len(), 128);
    assert_eq!(patch_drop(256, 1.0, 3).unwrap(), (0..256).collect::<Vec<_>>());
    assert_eq!(patch_drop(256, 0.5, 3).unwrap(), patch_drop(256, 0.5, 3).unwrap());
    assert!(patch_drop(256, 0.0, 3).is_err());
    assert!(patch_drop(256, 1.5, 3).is_err());
}

#[test]
fn predictions_csv_layout() {
    let mut params = ModelParams::init(&config()).unwrap();
    params.attach_head(1);
    let eval = balanced(7);
    let (m, preds) = evaluate(Exec::default(), &params, &eval).unwrap();
    let csv = predictions_csv(&preds).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "minute_index,venue_id,predicted_class,p0,p1,p2,p3,p4,p5,p6,true_class"
    );
    assert_eq!(csv.lines().count(), 8);
    let total: usize = m.confusion.iter().flatten().sum();
    assert_eq!(total, 7);
}
