//! Domain adaptation for multivariate time series via global adversarial
//! feature alignment, center-loss class alignment, and agreement-based
//! pseudo-labeling.
//!
//! This crate is the algorithmic core: datasets and batching, the 1D-CNN
//! encoder / classifier / discriminator family with hand-written backprop,
//! Adam, the label-spreading similarity classifier, the Agree Mechanism,
//! the adversarial and center losses, and macro-F1 evaluation. It is
//! `no_std` + `alloc`; everything is deterministic given explicit seeds.
//! File formats, checkpoints, and the CLI live in the companion `glada`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod align;
pub mod dataset;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod pretrain;
pub mod pseudolabel;
pub mod sbc;

pub use error::CoreError;

/// Derives an independent stream seed from a base seed and a stage tag.
///
/// Two splitmix64 steps; used everywhere a run-level seed has to fan out
/// into per-stage RNG streams without correlation.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
