use vila_core::dataio::*;
use vila_core::dsp::Spectrogram;
use vila_core::indicators::{similarity, SsimParams};
use vila_core::par::Exec;

fn event(minute: u32, sensor: usize, behavior: BehaviorClass) -> BehaviorEvent {
    BehaviorEvent {
        minute_index: minute,
        sensor_id: format!("sensor{sensor}"),
        behavior,
        source: EventSource::Annotation,
    }
}

#[test]
fn every_nonempty_subset_yields_its_top_priority() {
    for mask in 1u32..128 {
        let members: Vec<BehaviorClass> = BehaviorClass::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &c)| c)
            .collect();
        let events: Vec<_> = members.iter().enumerate().map(|(s, &c)| event(9, s, c)).collect();
        // ALL is ordered from highest to lowest priority.
        let expected = members[0];
        assert_eq!(priority_label(&events, 9), expected, "subset {mask:07b}");
        let mut reversed = events.clone();
        reversed.reverse();
        assert_eq!(priority_label(&reversed, 9), expected);
    }
    assert_eq!(priority_label(&[], 9), BehaviorClass::Quiet);
}

fn small() -> SyntheticConfig {
    SyntheticConfig {
        seed: 3,
        n_pretrain: 4,
        n_train: 70,
        n_eval: 70,
        ..SyntheticConfig::default()
    }
}

#[test]
fn synthetic_corpus_is_seeded_and_shaped() {
    let a = gen_synthetic_corpus(Exec::default(), &small()).unwrap();
    let b = gen_synthetic_corpus(Exec::Sequential, &small()).unwrap();
    assert_eq!(a.pretrain, b.pretrain);
    assert_eq!(a.train, b.train);
    assert_eq!(a.pretrain[0].shape(), (256, 32));
    assert_eq!(a.train[0].spectrogram.shape(), (128, 32));
    for class in BehaviorClass::ALL {
        assert_eq!(a.train.iter().filter(|c| c.label == class).count(), 10);
    }
    let other = gen_synthetic_corpus(Exec::default(), &SyntheticConfig { seed: 4, ..small() }).unwrap();
    assert_ne!(a.train[0].spectrogram, other.train[0].spectrogram);
}

fn template(clips: &[LabeledClip], class: BehaviorClass) -> Spectrogram {
    let members: Vec<_> = clips.iter().filter(|c| c.label == class).collect();
    let n = members.len() as f64;
    let first = &members[0].spectrogram;
    let mut values = vec![0.0; first.values.len()];
    for c in &members {
        for (v, x) in values.iter_mut().zip(&c.spectrogram.values) {
            *v += x / n;
        }
    }
    Spectrogram::new(values, first.n_frames, first.n_mels, first.rate_hz, class.name()).unwrap()
}

#[test]
fn synthetic_classes_are_distinct_but_not_trivial() {
    let corpus = gen_synthetic_corpus(Exec::default(), &small()).unwrap();
    let templates: Vec<_> = BehaviorClass::ALL.iter().map(|&c| template(&corpus.train, c)).collect();
    let p = SsimParams::default();
    let mut worst = f64::MIN;
    for i in 0..7 {
        for j in i + 1..7 {
            worst = worst.max(similarity(&templates[i], &templates[j], &p).unwrap());
        }
    }
    assert!(worst < 0.9, "closest templates have ssim {worst}");
    let probe = mean_spectrum_probe_accuracy(&corpus.train, &corpus.eval);
    assert!(probe < 0.6, "mean-spectrum probe reached {probe}");
    println!("template ssim max {worst:.3}, probe {probe:.3}");
}

#[test]
fn frame_dir_to_strip_image() {
    let dir = tempfile::tempdir().unwrap();
    for t in 0..10 {
        let mut img = Image::filled(8, 8, 0.0);
        img.set(t % 8, 5, 1.0);
        write_pgm(&dir.path().join(format!("frame{t:02}.pgm")), &img).unwrap();
    }
    std::fs::write(dir.path().join("fps"), "25").unwrap();
    let stack = read_frame_dir(dir.path()).unwrap();
    let strip = strip_wise(&stack, 5).unwrap();
    assert_eq!((strip.rows, strip.cols), (10, 8));
    for t in 0..10 {
        for r in 0..8 {
            assert_eq!(strip.at(t, r), if r == t % 8 { 1.0 } else { 0.0 });
        }
    }
    let pixels = sample_pixels(8, 8, 32, 1).unwrap();
    let img = pixel_wise(&stack, &pixels).unwrap();
    assert_eq!((img.rows, img.cols), (10, 32));
    // Exact selection: every output cell is a value present in the input.
    assert!(img.data.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn manifest_file_round_trip() {
    let m = Manifest::new(vec![ManifestEntry {
        path: "clips/a.wav".into(),
        modality: EntryModality::Audio,
        sample_rate_hz: Some(16000),
        label: None,
        minute_index: None,
        venue_id: None,
        split: Split::Pretrain,
    }])
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.write(&path).unwrap();
    assert_eq!(Manifest::read(&path).unwrap(), m);
}
