//! On-disk spectrogram store: one SPEC1 file per manifest entry plus an
//! `index.json` describing them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vila_core::dataio::{BehaviorClass, EntryModality, LabeledClip, ManifestEntry, Split};
use vila_core::dsp::{read_spec1, Spectrogram};

pub const STORE_FORMAT: &str = "vila-store/1";
pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreEntry {
    /// SPEC1 file name relative to the store root.
    pub file: String,
    /// Manifest path of the source; also the spectrogram's source id.
    pub source: String,
    pub modality: EntryModality,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<BehaviorClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minute_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue_id: Option<String>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryError {
    pub source: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreIndex {
    pub format: String,
    pub entries: Vec<StoreEntry>,
    pub errors: Vec<EntryError>,
}

impl StoreIndex {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let index: StoreIndex = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if index.format != STORE_FORMAT {
            bail!("{}: unsupported store format {:?}", path.display(), index.format);
        }
        Ok(index)
    }
}

pub fn spec_file_name(i: usize, entry: &ManifestEntry) -> String {
    let stem: String = Path::new(&entry.path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{i:05}-{stem}.spec1")
}

pub struct Store {
    pub root: PathBuf,
    pub index: StoreIndex,
}

impl Store {
    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self {
            root: root.to_path_buf(),
            index: StoreIndex::read(root)?,
        })
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &StoreEntry> {
        self.index.entries.iter().filter(move |e| e.split == split)
    }

    fn load(&self, e: &StoreEntry) -> Result<Spectrogram> {
        let path = self.root.join(&e.file);
        let mut s = read_spec1(&path).with_context(|| format!("reading {}", path.display()))?;
        s.source_id = e.source.clone();
        Ok(s)
    }

    pub fn spectrograms(&self, split: Split) -> Result<Vec<Spectrogram>> {
        let out: Vec<Spectrogram> = self.entries(split).map(|e| self.load(e)).collect::<Result<_>>()?;
        if out.is_empty() {
            bail!("store {} has no {split:?} entries", self.root.display());
        }
        Ok(out)
    }

    pub fn labeled(&self, split: Split) -> Result<Vec<LabeledClip>> {
        let out: Vec<LabeledClip> = self
            .entries(split)
            .map(|e| {
                let label = e.label.with_context(|| format!("{} has no label", e.source))?;
                Ok(LabeledClip {
                    spectrogram: self.load(e)?,
                    label,
                    minute_index: e.minute_index.unwrap_or(0),
                    venue_id: e.venue_id.clone().unwrap_or_default(),
                })
            })
            .collect::<Result<_>>()?;
        if out.is_empty() {
            bail!("store {} has no {split:?} entries", self.root.display());
        }
        Ok(out)
    }
}
