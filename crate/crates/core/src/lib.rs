//! Fairness-oriented data preparation for graph-structured credit data.
//!
//! The crate ingests a tabular credit dataset into a [`graph::CreditGraph`],
//! rebalances it with one of several mitigation strategies (node sampling,
//! sensitive-attribute reassignment, synthetic augmentation), trains a
//! three-layer GCN on each prepared variant, and reports group fairness
//! metrics for the resulting predictions.

pub mod augment;
pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod feature_edit;
pub mod gcn;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod knn;
pub mod optim;
pub mod sampling;
pub mod sparse;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Portable, seedable RNG used everywhere randomness is needed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream derived from `seed`, so that e.g. the train/test split
/// and weight initialization never share random draws.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
