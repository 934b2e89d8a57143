//! Geometry diagnostics for contextual token-embedding spaces.
//!
//! - [`store`]: EGC-v1 corpus format, sampling and grouping.
//! - [`geometry`]: anisotropy baseline, self / intra-sentence similarity.
//! - [`dimensions`]: per-dimension contributions, rogue ranking, informativity.
//! - [`frequency`]: self-similarity change and cross-model correlation curves.
//! - [`lab`]: InfoNCE, temperature bounds and a small contrastive-training lab.
//! - [`cli`]: the `isolab` command-line front end.

pub mod cli;
pub mod dimensions;
pub mod error;
pub mod frequency;
pub mod geometry;
pub mod lab;
pub mod seed;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
