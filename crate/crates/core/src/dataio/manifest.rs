use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::finetune::BehaviorClass;
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "vila-manifest/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryModality {
    Audio,
    Vibration,
    Image,
    Video,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub modality: EntryModality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<BehaviorClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minute_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue_id: Option<String>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            format: MANIFEST_FORMAT.into(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    /// Paths are unique (so each entry sits in exactly one split).
    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(Error::Manifest(format!(
                "unsupported format {:?}, expected {MANIFEST_FORMAT:?}",
                self.format
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Manifest(format!("duplicate path {}", e.path)));
            }
            if e.sample_rate_hz == Some(0) {
                return Err(Error::Manifest(format!("{}: sample_rate_hz must be positive", e.path)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(path: &str, split: Split) -> ManifestEntry {
        ManifestEntry {
            path: path.into(),
            modality: EntryModality::Vibration,
            sample_rate_hz: Some(500),
            label: Some(BehaviorClass::Clapping),
            minute_index: Some(3),
            venue_id: Some("stadium-2".into()),
            split,
        }
    }

    #[test]
    fn round_trip_and_golden_shape() {
        let m = Manifest::new(vec![
            entry("a.wav", Split::Train),
            ManifestEntry {
                path: "b.wav".into(),
                modality: EntryModality::Audio,
                sample_rate_hz: None,
                label: None,
                minute_index: None,
                venue_id: None,
                split: Split::Pretrain,
            },
        ])
        .unwrap();
        let json = m.to_json();
        assert_eq!(Manifest::from_json(&json).unwrap(), m);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["format"], "vila-manifest/1");
        assert_eq!(v["entries"][0]["label"], "clapping");
        assert_eq!(v["entries"][0]["split"], "train");
        assert!(v["entries"][1].get("label").is_none());
        assert_eq!(m.split(Split::Pretrain).count(), 1);
    }

    #[test]
    fn rejects_duplicates_unknown_keys_and_versions() {
        assert!(Manifest::new(vec![entry("a", Split::Train), entry("a", Split::Eval)]).is_err());
        let bad = r#"{"format":"vila-manifest/1","entries":[{"path":"a","modality":"audio","split":"train","extra":1}]}"#;
        assert!(Manifest::from_json(bad).is_err());
        let old = r#"{"format":"vila-manifest/0","entries":[]}"#;
        assert!(Manifest::from_json(old).is_err());
        let multi = r#"{"format":"vila-manifest/1","entries":[{"path":"a","modality":"audio","split":"train","label":["booing","quiet"]}]}"#;
        assert!(Manifest::from_json(multi).is_err());
    }
}
