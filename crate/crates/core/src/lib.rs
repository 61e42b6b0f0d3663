//! Remix-tree analytics: rebuilds song forests from community event logs,
//! filters them, mines recurring collaborations from contiguous root-to-leaf
//! path windows, derives regression tables of song/author measures, and
//! profiles the mined collaborations.

pub mod error;
pub mod features;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod profile;
pub mod synth;

pub use error::{CoreError, Result};
