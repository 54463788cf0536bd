use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use vila_core::checksum::{file_sha256, sha256_hex};
use vila_core::dataio::{
    load_entry, synthetic_items, EntryModality, Manifest, ManifestEntry, Modality, Split,
};
use vila_core::dsp::{encode_spec1, write_wav};
use vila_core::finetune::{evaluate, finetune, predictions_csv, Metrics};
use vila_core::indicators::{
    item_diversity, item_similarity, sort_into_groups, sort_nested, IndicatorReport, Level, MaeReconstructor,
    SsimParams,
};
use vila_core::mae::{encode_checkpoint, loss_curve_csv, pretrain, read_checkpoint, ModelParams};
use vila_core::par::{with_jobs, Exec};

use crate::config::RunConfig;
use crate::manifest::Recorder;
use crate::store::{spec_file_name, EntryError, Store, StoreEntry, StoreIndex, INDEX_FILE, STORE_FORMAT};
use crate::{Cli, Cmd, Global, SortBy, SplitArg};

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Pretrain => Split::Pretrain,
            SplitArg::Train => Split::Train,
            SplitArg::Eval => Split::Eval,
        }
    }
}

fn out_dir(g: &Global, command: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| Path::new("runs").join(command))
}

/// Training runs on one thread unless `--jobs` asks for more. Results are
/// identical either way.
fn training_exec(jobs: usize) -> Exec {
    if jobs == 0 {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let g = cli.global;
    let cfg = RunConfig::load(g.config.as_deref(), g.seed)?;
    let jobs = g.jobs;
    with_jobs(jobs, move || match cli.command {
        Cmd::GenSynthetic => gen_synthetic(&g, &cfg),
        Cmd::Preprocess { manifest, store } => preprocess(&g, &cfg, &manifest, store),
        Cmd::Pretrain { store } => cmd_pretrain(&g, &cfg, &store),
        Cmd::Finetune { store, init } => cmd_finetune(&g, &cfg, &store, init.as_deref()),
        Cmd::Evaluate { store, models } => cmd_evaluate(&g, &cfg, &store, &models),
        Cmd::Indicators {
            store,
            items,
            reference,
            model,
        } => cmd_indicators(&g, &cfg, &store, items.into(), reference.into(), &model),
        Cmd::Sort {
            report,
            manifest,
            by,
            k,
        } => cmd_sort(&g, &cfg, &report, &manifest, by, k),
    })
}

fn gen_synthetic(g: &Global, cfg: &RunConfig) -> Result<ExitCode> {
    let mut rec = Recorder::new(&out_dir(g, "gen-synthetic"))?;
    let syn = &cfg.synthetic;
    let items = synthetic_items(syn);
    let mut entries = Vec::with_capacity(items.len());
    for chunk in items.chunks(64) {
        let clips = Exec::Parallel.map(chunk, |it| it.clip(syn));
        for (it, clip) in chunk.iter().zip(&clips) {
            let (dir, modality) = match it.modality {
                Modality::Audio => ("audio", EntryModality::Audio),
                Modality::Vibration => ("vibration", EntryModality::Vibration),
            };
            let rel = format!("{dir}/{}.wav", it.source_id);
            let path = rec.out().join(&rel);
            if let Some(d) = path.parent() {
                std::fs::create_dir_all(d)?;
            }
            write_wav(&path, clip)?;
            rec.record(&path);
            entries.push(ManifestEntry {
                path: rel,
                modality,
                sample_rate_hz: Some(clip.sample_rate_hz),
                label: it.label(),
                minute_index: it.minute_index,
                venue_id: it.label().map(|_| "synthetic".to_string()),
                split: it.split,
            });
        }
    }
    let manifest = Manifest::new(entries)?;
    let path = rec.write_out("manifest.json", manifest.to_json())?;
    println!("wrote {} clips and {}", manifest.entries.len(), path.display());
    rec.finish("gen-synthetic", g.jobs, cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn preprocess(g: &Global, cfg: &RunConfig, manifest_path: &Path, store: Option<PathBuf>) -> Result<ExitCode> {
    let manifest = Manifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let store = store
        .or_else(|| g.out.clone())
        .context("no store directory: pass --store, --out or set VILA_CACHE")?;
    let mut rec = Recorder::new(&g.out.clone().unwrap_or_else(|| store.clone()))?;
    std::fs::create_dir_all(&store)?;

    let indexed: Vec<(usize, &ManifestEntry)> = manifest.entries.iter().enumerate().collect();
    let results = Exec::Parallel.map(&indexed, |&(_, e)| {
        let sc = if e.split == Split::Pretrain {
            &cfg.spectrogram.pretrain
        } else {
            &cfg.spectrogram.finetune
        };
        load_entry(e, root, sc).map(|s| (s.shape(), encode_spec1(&s)))
    });

    let mut index = StoreIndex {
        format: STORE_FORMAT.into(),
        entries: Vec::new(),
        errors: Vec::new(),
    };
    for ((i, e), res) in indexed.into_iter().zip(results) {
        match res {
            Ok(((n_frames, n_mels), bytes)) => {
                let file = spec_file_name(i, e);
                rec.write(&store.join(&file), &bytes)?;
                index.entries.push(StoreEntry {
                    file,
                    source: e.path.clone(),
                    modality: e.modality,
                    split: e.split,
                    label: e.label,
                    minute_index: e.minute_index,
                    venue_id: e.venue_id.clone(),
                    n_frames,
                    n_mels,
                    sha256: sha256_hex(&bytes),
                });
            }
            Err(err) => index.errors.push(EntryError {
                source: e.path.clone(),
                error: err.to_string(),
            }),
        }
    }
    rec.write(&store.join(INDEX_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
    rec.finish("preprocess", g.jobs, cfg)?;
    println!(
        "{} spectrograms in {}, {} failed",
        index.entries.len(),
        store.display(),
        index.errors.len()
    );
    if index.errors.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}", serde_json::to_string_pretty(&index.errors)?);
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_pretrain(g: &Global, cfg: &RunConfig, store: &Path) -> Result<ExitCode> {
    let corpus = Store::open(store)?.spectrograms(Split::Pretrain)?;
    let mut rec = Recorder::new(&out_dir(g, "pretrain"))?;
    let out = pretrain(training_exec(g.jobs), &corpus, &cfg.model, &cfg.pretrain)?;
    rec.write_out("model.mae1", encode_checkpoint(&out.params))?;
    rec.write_out("loss.csv", loss_curve_csv(&out.losses))?;
    rec.finish("pretrain", g.jobs, cfg)?;
    if let (Some(first), Some(last)) = (out.losses.first(), out.losses.last()) {
        println!("pretrained on {} items: loss {first:.5} -> {last:.5}", corpus.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_finetune(g: &Global, cfg: &RunConfig, store: &Path, init: Option<&Path>) -> Result<ExitCode> {
    let train = Store::open(store)?.labeled(Split::Train)?;
    let base = match init {
        Some(p) => read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?,
        None => ModelParams::init(&cfg.model)?,
    };
    let mut rec = Recorder::new(&out_dir(g, "finetune"))?;
    let out = finetune(training_exec(g.jobs), &base, &train, &cfg.finetune)?;
    rec.write_out("model.mae1", encode_checkpoint(&out.params))?;
    rec.write_out("epochs.json", serde_json::to_string_pretty(&out.epochs)? + "\n")?;
    rec.finish("finetune", g.jobs, cfg)?;
    if let Some(last) = out.epochs.last() {
        println!("epoch {}: loss {:.4}, train accuracy {:.3}", last.epoch, last.loss, last.accuracy);
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ModelResult {
    name: String,
    checkpoint: String,
    sha256: String,
    accuracy: f64,
    metrics: Metrics,
}

#[derive(Serialize)]
struct EvaluationReport {
    split: Split,
    n_items: usize,
    models: Vec<ModelResult>,
}

fn parse_model_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| s.into());
            (name, p)
        }
    }
}

fn cmd_evaluate(g: &Global, cfg: &RunConfig, store: &Path, models: &[String]) -> Result<ExitCode> {
    let eval = Store::open(store)?.labeled(Split::Eval)?;
    let mut rec = Recorder::new(&out_dir(g, "evaluate"))?;
    let mut results = Vec::new();
    for arg in models {
        let (name, path) = parse_model_arg(arg);
        if results.iter().any(|r: &ModelResult| r.name == name) {
            bail!("model name {name:?} given twice");
        }
        let params = read_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
        let (metrics, predictions) = evaluate(training_exec(g.jobs), &params, &eval)?;
        rec.write_out(&format!("predictions-{name}.csv"), predictions_csv(&predictions)?)?;
        println!("{name}: accuracy {:.4}", metrics.accuracy);
        results.push(ModelResult {
            name,
            checkpoint: path.to_string_lossy().into_owned(),
            sha256: file_sha256(&path)?,
            accuracy: metrics.accuracy,
            metrics,
        });
    }
    let report = EvaluationReport {
        split: Split::Eval,
        n_items: eval.len(),
        models: results,
    };
    rec.write_out("report.json", serde_json::to_string_pretty(&report)? + "\n")?;
    rec.finish("evaluate", g.jobs, cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_indicators(
    g: &Global,
    cfg: &RunConfig,
    store_path: &Path,
    items_split: Split,
    ref_split: Split,
    model: &Path,
) -> Result<ExitCode> {
    let store = Store::open(store_path)?;
    let items = store.spectrograms(items_split)?;
    let reference = store.spectrograms(ref_split)?;
    if items[0].shape() != reference[0].shape() {
        bail!(
            "{items_split:?} spectrograms are {:?} but {ref_split:?} ones are {:?}; similarity needs equal shapes",
            items[0].shape(),
            reference[0].shape()
        );
    }
    let params = read_checkpoint(model).with_context(|| format!("reading {}", model.display()))?;
    let exec = Exec::Parallel;
    let max_refs = (cfg.indicators.max_refs > 0).then_some(cfg.indicators.max_refs);
    let sim = item_similarity(
        exec,
        &items,
        &reference,
        &SsimParams::default(),
        max_refs,
        cfg.seeds().indicators,
    )?;
    let div = item_diversity(exec, &items, &MaeReconstructor::new(&params, cfg.indicators.mask_ratio))?;
    let ids: Vec<String> = items.iter().map(|s| s.source_id.clone()).collect();
    let name = store_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "store".into());
    let report = IndicatorReport::build(&format!("{name}/{items_split:?}").to_lowercase(), &ids, &sim, &div)?;
    let mut rec = Recorder::new(&out_dir(g, "indicators"))?;
    rec.write_out("report.json", report.to_json() + "\n")?;
    rec.write_out("report.csv", report.to_csv()?)?;
    rec.finish("indicators", g.jobs, cfg)?;
    println!(
        "{} items: mean similarity {:.4}, mean diversity {:.5}",
        report.n_items, report.similarity_mean, report.diversity_mean
    );
    Ok(ExitCode::SUCCESS)
}

fn group_name(i: usize, k: usize) -> String {
    if k == 3 {
        Level::ALL[i].name().to_string()
    } else {
        format!("g{i}")
    }
}

fn cmd_sort(g: &Global, cfg: &RunConfig, report: &Path, manifest: &Path, by: SortBy, k: usize) -> Result<ExitCode> {
    let text = std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let report: IndicatorReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", report.display()))?;
    let manifest = Manifest::read(manifest)?;
    let by_path: HashMap<&str, &ManifestEntry> = manifest.entries.iter().map(|e| (e.path.as_str(), e)).collect();
    let entries: Vec<&ManifestEntry> = report
        .per_item
        .iter()
        .map(|it| {
            by_path
                .get(it.source_id.as_str())
                .copied()
                .with_context(|| format!("{} is not in the manifest", it.source_id))
        })
        .collect::<Result<_>>()?;
    let ids: Vec<String> = report.per_item.iter().map(|it| it.source_id.clone()).collect();
    let sim: Vec<f64> = report.per_item.iter().map(|it| it.similarity).collect();
    let div: Vec<f64> = report.per_item.iter().map(|it| it.diversity).collect();

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    match by {
        SortBy::Similarity | SortBy::Diversity => {
            let (scores, prefix) = if by == SortBy::Similarity { (&sim, "similarity") } else { (&div, "diversity") };
            for (i, grp) in sort_into_groups(scores, &ids, k)?.into_iter().enumerate() {
                groups.push((format!("{prefix}-{}", group_name(i, k)), grp));
            }
        }
        SortBy::Nested => {
            if k != 3 {
                bail!("nested sorting always uses 3 x 3 groups");
            }
            for (s, row) in sort_nested(&sim, &div, &ids)?.into_iter().enumerate() {
                for (d, grp) in row.into_iter().enumerate() {
                    groups.push((format!("nested-{}-{}", group_name(s, 3), group_name(d, 3)), grp));
                }
            }
        }
    }
    let mut rec = Recorder::new(&out_dir(g, "sort"))?;
    for (name, idx) in &groups {
        let part = Manifest::new(idx.iter().map(|&i| entries[i].clone()).collect())?;
        rec.write_out(&format!("{name}.json"), part.to_json())?;
        println!("{name}: {} entries", idx.len());
    }
    rec.finish("sort", g.jobs, cfg)?;
    Ok(ExitCode::SUCCESS)
}
