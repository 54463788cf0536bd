use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vila_core::dsp::Spectrogram;
use vila_core::indicators::{dataset_similarity, diversity, MaeReconstructor, Pairing, SsimParams};
use vila_core::mae::{batch_gradients, LossRegion, MaskedSample, ModelConfig, ModelParams};
use vila_core::par::Exec;
use vila_core::patching::{make_mask, patchify};

fn specs(n: usize, rows: usize, seed: u64) -> Vec<Spectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v = (0..rows * 32).map(|_| rng.random::<f64>()).collect();
            Spectrogram::new(v, rows, 32, 1000.0, format!("s{i}")).unwrap()
        })
        .collect()
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gradients(c: &mut Criterion) {
    let config = ModelConfig {
        dec_window: 64,
        ..ModelConfig::tiny()
    };
    let params = ModelParams::init(&config).unwrap();
    let batch: Vec<MaskedSample> = specs(8, 256, 1)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let grid = patchify(s, 4, 4).unwrap();
            let plan = make_mask(grid.n_patches(), 0.8, i as u64).unwrap();
            MaskedSample { grid, plan }
        })
        .collect();
    let mut g = c.benchmark_group("batch_gradients");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradients(exec, &params, &batch, LossRegion::Masked).unwrap())
        });
    }
    g.finish();
}

fn similarity(c: &mut Criterion) {
    let a = specs(40, 128, 2);
    let b = specs(40, 128, 3);
    let p = SsimParams::default();
    let mut g = c.benchmark_group("dataset_similarity");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| dataset_similarity(exec, &a, &b, &p, Pairing::Exhaustive).unwrap())
        });
    }
    g.finish();
}

fn reconstruction(c: &mut Criterion) {
    let config = ModelConfig {
        dec_window: 64,
        ..ModelConfig::tiny()
    };
    let params = ModelParams::init(&config).unwrap();
    let model = MaeReconstructor::new(&params, 0.8);
    let items = specs(8, 256, 4);
    let mut g = c.benchmark_group("diversity");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| diversity(exec, &items, &model).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, gradients, similarity, reconstruction);
criterion_main!(benches);
