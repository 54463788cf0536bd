use vila_core::dataio::{synth_clip, BehaviorClass, Modality, SyntheticConfig};
use vila_core::dsp::{normalize, to_spectrogram, Spectrogram, SpectrogramConfig};
use vila_core::indicators::*;
use vila_core::mae::{fit_batch, recon_loss, reconstruct, LossRegion, MaskedSample, ModelConfig, ModelParams};
use vila_core::par::Exec;
use vila_core::patching::{make_mask, patchify};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, id: &str) -> Spectrogram {
    let v = (0..64 * 32).map(|_| rng.random::<f64>()).collect();
    Spectrogram::new(v, 64, 32, 1000.0, id).unwrap()
}

#[test]
fn similarity_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = SsimParams::default();
    let set: Vec<_> = (0..6).map(|i| random(&mut rng, &format!("a{i}"))).collect();
    let s = dataset_similarity(Exec::default(), &set, &set, &p, Pairing::Identity).unwrap();
    assert!((s - 1.0).abs() < 1e-12);
    for _ in 0..100 {
        let (x, y) = (random(&mut rng, "x"), random(&mut rng, "y"));
        let v = similarity(&x, &y, &p).unwrap();
        assert_eq!(v, similarity(&y, &x, &p).unwrap());
        assert!(v > -1.0 && v <= 1.0);
    }
    let zeros = vec![Spectrogram::new(vec![0.0; 2048], 64, 32, 1000.0, "z").unwrap(); 3];
    let ones = vec![Spectrogram::new(vec![1.0; 2048], 64, 32, 1000.0, "o").unwrap(); 4];
    let d = dataset_similarity(Exec::default(), &zeros, &ones, &p, Pairing::default()).unwrap();
    assert!((d - p.c1 / (1.0 + p.c1)).abs() < 1e-12);
    assert!(dataset_similarity(Exec::default(), &[], &ones, &p, Pairing::Exhaustive).is_err());
    let a = dataset_similarity(Exec::default(), &set, &set[..3], &p, Pairing::Random { n_pairs: Some(7), seed: 5 });
    let b = dataset_similarity(Exec::Sequential, &set, &set[..3], &p, Pairing::Random { n_pairs: Some(7), seed: 5 });
    assert_eq!(a.unwrap(), b.unwrap());
    // Moving a set toward the reference raises its similarity.
    let near: Vec<_> = set
        .iter()
        .map(|s| Spectrogram {
            values: s.values.iter().map(|v| 0.9 * v + 0.05).collect(),
            ..s.clone()
        })
        .collect();
    let far = dataset_similarity(Exec::default(), &set, &zeros, &p, Pairing::Exhaustive).unwrap();
    let close = dataset_similarity(Exec::default(), &set, &near, &p, Pairing::Identity).unwrap();
    assert!(close > far);
}

struct Noisy<'a> {
    base: &'a [Spectrogram],
    sigma: f64,
    seed: u64,
}

impl Reconstructor for Noisy<'_> {
    fn reconstruct(&self, s: &Spectrogram) -> vila_core::Result<Spectrogram> {
        let i = self.base.iter().position(|b| b.source_id == s.source_id).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed * 1000 + i as u64);
        let values = s.values.iter().map(|v| v + 0.02 + self.sigma * (rng.random::<f64>() - 0.5)).collect();
        Ok(Spectrogram { values, ..s.clone() })
    }
}

#[test]
fn diversity_grows_with_reconstruction_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let items: Vec<_> = (0..4).map(|i| random(&mut rng, &format!("i{i}"))).collect();
    let mut wins = 0;
    for trial in 0..50 {
        let a = diversity(Exec::default(), &items, &Noisy { base: &items, sigma: 0.0, seed: trial }).unwrap();
        let b = diversity(Exec::default(), &items, &Noisy { base: &items, sigma: 0.1, seed: trial }).unwrap();
        wins += usize::from(b > a);
    }
    assert!(wins as f64 / 50.0 >= 0.95, "{wins}/50");
}

#[test]
fn overfit_model_has_tiny_diversity() {
    let cfg = SyntheticConfig::default();
    let clip = synth_clip(BehaviorClass::Active, Modality::Audio, &cfg, 77, "one");
    let spec = normalize(&to_spectrogram(&clip, &SpectrogramConfig::pretrain()).unwrap());
    let config = ModelConfig::default();
    let untrained = ModelParams::init(&config).unwrap();
    let grid = patchify(&spec, 4, 4).unwrap();
    // The evaluation plan: seed 0 at the training ratio.
    let plan = make_mask(grid.n_patches(), 0.8, 0).unwrap();
    let batch = [MaskedSample { grid: grid.clone(), plan: plan.clone() }];
    let (trained, _) = fit_batch(Exec::default(), untrained.clone(), &batch, LossRegion::Masked, 800, 3e-3).unwrap();

    let before = recon_loss(&grid, &reconstruct(&untrained, &grid, &plan).unwrap(), &plan).unwrap();
    let after = recon_loss(&grid, &reconstruct(&trained, &grid, &plan).unwrap(), &plan).unwrap();
    assert!(after < 0.01 * before, "masked loss {before} -> {after}");

    let items = [spec];
    let d0 = diversity(Exec::default(), &items, &MaeReconstructor::new(&untrained, 0.8)).unwrap();
    let d1 = diversity(Exec::default(), &items, &MaeReconstructor::new(&trained, 0.8)).unwrap();
    assert!(d1 < 0.01 * d0, "diversity {d0} -> {d1}");
}

#[test]
fn report_from_scores() {
    let n = 90;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sim: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let div: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("clip-{i:03}")).collect();
    let r = IndicatorReport::build("audio", &ids, &sim, &div).unwrap();
    assert_eq!(r.n_items, 90);
    assert!(r.groups.nested.values().all(|c| c.len() == 10));
    assert!(r.groups.by_similarity.values().all(|c| c.len() == 30));
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in ["dataset_id", "n_items", "similarity_mean", "diversity_mean", "per_item", "groups"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}
