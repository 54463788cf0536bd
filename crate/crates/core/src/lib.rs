//! Cross-modal spectrogram pretraining toolkit.
//!
//! The pipeline has two training stages. A masked autoencoder is first
//! pretrained on audio-like spectrograms ([`mae`]); its encoder is then
//! fine-tuned with a linear head to classify one-minute vibration
//! spectrograms into seven crowd behaviors ([`finetune`]). The
//! [`indicators`] module scores candidate pretraining corpora by structural
//! similarity and reconstruction error so that a corpus can be picked
//! without training on every candidate.
//!
//! Data-parallel loops (per-sample gradients, pairwise scores, per-item
//! reconstructions) go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Reductions
//! always run in input order, so results are bit-identical either way.

pub mod benchmark;
pub mod checksum;
pub mod dataio;
pub mod dsp;
pub mod error;
pub mod finetune;
pub mod indicators;
pub mod mae;
pub mod par;
pub mod patching;
pub mod seed;

pub use error::{Error, Result};
