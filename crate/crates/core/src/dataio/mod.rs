//! Corpus ingestion and construction.

mod frames;
mod labels;
mod manifest;
mod preprocess;
mod probe;
mod synthetic;

pub use crate::finetune::{BehaviorClass, LabeledClip};
pub use frames::{pixel_wise, read_frame_dir, read_pgm, sample_pixels, strip_wise, write_pgm, FrameStack, Image};
pub use labels::{label_minutes, priority_label, read_events_csv, BehaviorEvent, EventSource};
pub use manifest::{Manifest, ManifestEntry, Split, EntryModality, MANIFEST_FORMAT};
pub use preprocess::{load_entry, resize_nearest};
pub use probe::{mean_spectrum_features, mean_spectrum_probe_accuracy};
pub use synthetic::{
    gen_synthetic_corpus, labeled_class, synth_clip, synthetic_items, Modality, SyntheticConfig,
    SyntheticCorpus, SyntheticItem,
};
