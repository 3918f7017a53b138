//! Slow, obviously-correct reference implementations used as test oracles.
//!
//! Nothing here depends on `posegen-core`; inputs and outputs are plain
//! arrays so the two code paths cannot share bugs through common helpers.

pub mod mlp;
pub mod procrustes;
pub mod raster;
pub mod rle;
pub mod rng;
