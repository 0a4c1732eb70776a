//! Frequency-aware multi-scale feature loss.
//!
//! An encoder maps the three detail subbands (LH, HL, HH) of an image to
//! feature maps at three scales, each reweighted by a spatial attention map.
//! Every scale is cut into a `G` x `G` grid of patches. For each anchor patch
//! the most similar of its 8-connected neighbours form a positive set, whose
//! pooled features pass through a small MLP. The loss compares these
//! aggregates between the clean image (online encoder) and the network output
//! (target encoder, an exponential moving average of the online one), using
//! positive sets chosen on the online side for both.

mod encoder;
mod loss;
mod patches;

pub use encoder::{freq_attention, Encoder, EncoderConfig, MlpParams};
pub use loss::{aggregate, fam_loss, fam_star_loss, EncoderPair};
pub use patches::{cosine_sim, reassemble_patches, select_positive_set, split_patches, Patch};

/// Similarities of vectors with a norm below this are defined as 0.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Default target-encoder momentum.
pub const DEFAULT_MOMENTUM: f64 = 0.99;
