//! Exact arithmetic over rational functions of the symbolic sample size
//! `m`, and the index-set partition enumerations used by every recursion.
//!
//! All values are immutable after construction and safe to share across
//! threads.

mod partition;
mod poly;
mod rational;

pub use partition::{canonicalize_blocks, canonical_cmp, set_partitions, subset_splits, SlotPartition};
pub use poly::Poly;
pub use rational::RationalFn;

/// Exact rational number (arbitrary precision).
pub type Rat = num::BigRational;
