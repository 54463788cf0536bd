use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vila_core::benchmark::TransferConfig;
use vila_core::dataio::SyntheticConfig;
use vila_core::dsp::SpectrogramConfig;
use vila_core::finetune::FinetuneConfig;
use vila_core::mae::{ModelConfig, PretrainConfig};
use vila_core::seed::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrogramSection {
    /// Used for the pretrain split.
    pub pretrain: SpectrogramConfig,
    /// Used for the train and eval splits.
    pub finetune: SpectrogramConfig,
}

impl Default for SpectrogramSection {
    fn default() -> Self {
        Self {
            pretrain: SpectrogramConfig::pretrain(),
            finetune: SpectrogramConfig::finetune(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndicatorSection {
    /// Mask ratio of the fixed diversity evaluation plan.
    pub mask_ratio: f64,
    /// Reference items per similarity score; 0 uses all of them.
    pub max_refs: usize,
}

impl Default for IndicatorSection {
    fn default() -> Self {
        Self {
            mask_ratio: 0.8,
            max_refs: 0,
        }
    }
}

/// Every tunable of every command. Section `seed` fields are derived from
/// the top-level `seed` and may not be set directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub spectrogram: SpectrogramSection,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub synthetic: SyntheticConfig,
    pub indicators: IndicatorSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TransferConfig::default();
        Self {
            seed: 0,
            spectrogram: SpectrogramSection::default(),
            model: t.model,
            pretrain: t.pretrain,
            finetune: t.finetune,
            synthetic: t.synthetic,
            indicators: IndicatorSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seeds {
    pub root: u64,
    pub model: u64,
    pub pretrain: u64,
    pub finetune: u64,
    pub synthetic: u64,
    pub indicators: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        reject_section_seeds(text)?;
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.apply_seeds();
        Ok(cfg)
    }

    pub fn seeds(&self) -> Seeds {
        let r = self.seed;
        Seeds {
            root: r,
            model: derive(r, "model"),
            pretrain: derive(r, "pretrain"),
            finetune: derive(r, "finetune"),
            synthetic: derive(r, "synthetic"),
            indicators: derive(r, "indicators"),
        }
    }

    fn apply_seeds(&mut self) {
        let s = self.seeds();
        self.model.seed = s.model;
        self.pretrain.seed = s.pretrain;
        self.finetune.seed = s.finetune;
        self.synthetic.seed = s.synthetic;
    }

    fn validate(&self) -> Result<()> {
        self.spectrogram.pretrain.validate().context("[spectrogram.pretrain]")?;
        self.spectrogram.finetune.validate().context("[spectrogram.finetune]")?;
        self.model.validate().context("[model]")?;
        if !(self.indicators.mask_ratio > 0.0 && self.indicators.mask_ratio < 1.0) {
            bail!("[indicators] mask_ratio must lie in (0, 1)");
        }
        Ok(())
    }
}

fn reject_section_seeds(text: &str) -> Result<()> {
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            section = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let key = key.trim();
        let dotted = key.ends_with(".seed");
        if (key == "seed" && !section.is_empty()) || dotted {
            let table = if dotted { key.trim_end_matches(".seed").to_string() } else { section.clone() };
            bail!(
                "line {}: key `seed` in [{table}] is not allowed; set the top-level `seed` instead",
                n + 1
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("seed = 3\n[model]\nembed_dim = 64\n[pretrain]\nsteps = 5\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.embed_dim, 64);
        assert_eq!(c.pretrain.steps, 5);
        assert_eq!(c.finetune, RunConfig::default().finetune);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_report_line_and_key() {
        let err = RunConfig::parse("[model]\nembed_dim = 32\nembed_dims = 4\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("embed_dims"), "{msg}");
        let err = RunConfig::parse("[pretrain]\nsteps = \"many\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
    }

    #[test]
    fn section_seeds_are_rejected() {
        let err = RunConfig::parse("seed = 1\n\n[model]\nseed = 4\n").unwrap_err();
        assert!(format!("{err}").contains("line 4"));
        assert!(RunConfig::parse("pretrain.seed = 2\n").is_err());
    }

    #[test]
    fn semantic_validation() {
        assert!(RunConfig::parse("[model]\nembed_dim = 30\n").is_err());
        assert!(RunConfig::parse("[indicators]\nmask_ratio = 1.0\n").is_err());
    }

    #[test]
    fn seeds_flow_from_the_root() {
        let a = RunConfig::load(None, Some(7)).unwrap();
        let b = RunConfig::load(None, Some(8)).unwrap();
        assert_eq!(a.model.seed, a.seeds().model);
        assert_ne!(a.pretrain.seed, b.pretrain.seed);
    }
}
