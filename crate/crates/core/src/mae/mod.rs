//! Masked autoencoder over spectrogram patches.
//!
//! The encoder embeds only the visible patches, adds a fixed 2-D
//! (time, frequency) sinusoidal position code and runs pre-norm transformer
//! blocks with global attention. The decoder projects the encoded tokens to
//! its own width, scatters them back to their grid positions, fills masked
//! positions with a learned mask token, adds its own position code, and runs
//! blocks with local (windowed) attention before predicting every patch.
//! Gradients are computed by hand-written reverse passes, checked against
//! central finite differences in the test suite.


mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;


pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use layers::{Block, LayerNorm, Linear};
pub use model::{positional_encoding, ClassifierHead, Decoder, Encoder, ModelConfig, ModelParams, N_CLASSES};
pub use tensor::Tensor;
pub use train::{
    backward, batch_gradients, decode, encode, fit_batch, Encoded, full_mse, loss_curve_csv, pretrain, recon_loss,
    reconstruct, sample_loss, AdamW, Batch, LossRegion, LrSchedule, MaskedSample, PretrainConfig,
    PretrainOutput, TrainState,
};
