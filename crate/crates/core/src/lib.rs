//! Difficulty-based sample weighting.
//!
//! The crate covers the weight functions themselves ([`weighting`]), the
//! density-ratio view of which difficulty band deserves priority
//! ([`difficulty`]), synthetic scenarios ([`datagen`]), a small weighted
//! classifier ([`trainer`]), mode schedules and hyper-parameter search
//! ([`schedule`]), and a Monte Carlo bias/variance study ([`biasvar`]).

// `!(x >= 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod biasvar;
pub mod datagen;
pub mod difficulty;
pub mod error;
pub mod schedule;
pub mod shape;
pub mod trainer;
pub mod weighting;

pub use error::{Error, Result};

/// Independent sub-seed for `stream` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
