#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{check, sample};
use vila_core::mae::{LossRegion, ModelConfig};

#[test]
fn masked_loss_gradients_match_finite_differences() {
    let config = ModelConfig {
        dec_window: 32,
        ..ModelConfig::tiny()
    };
    let s = sample(3, 64, 32, 0.75);
    let (count, worst, bad) = check(config, &s, LossRegion::Masked, 6, 1e-4);
    assert!(bad.is_empty(), "{bad:#?}");
    assert!(count >= 200, "{count} coordinates");
    println!("{count} coordinates, worst relative error {worst:e}");
}

#[test]
fn full_grid_loss_and_global_decoder_attention() {
    let config = ModelConfig {
        dec_window: 0,
        n_heads: 2,
        ..ModelConfig::tiny()
    };
    let s = sample(4, 16, 16, 0.5);
    let (_, _, bad) = check(config, &s, LossRegion::Full, 2, 1e-4);
    assert!(bad.is_empty(), "{bad:#?}");
}
