//! Ranking the tiles of a semantic-segmentation dataset by training value.
//!
//! Six scorers are provided, two from label masks ([`label::rank_lc`],
//! [`label::rank_cb`]), two from per-tile embeddings ([`embed::rank_fd`],
//! [`embed::rank_fa`]) and two hybrids ([`hybrid::rank_lcfd`],
//! [`hybrid::rank_facb`]), along with random and k-center baselines.
//! [`analysis`] turns rankings into budgeted subsets and agreement reports.

pub mod analysis;
pub mod csem;
pub mod embed;
pub mod error;
pub mod hybrid;
pub mod ingest;
pub mod label;
pub mod linalg;
pub mod model;
pub mod ranking_io;
pub mod rng;

pub use csem::EmbeddingMatrix;
pub use error::{Error, Result};
pub use model::{
    validate_manifest, ClassHistogram, ClassSchema, DatasetManifest, RankEntry, Ranking,
    TileRecord, Violation,
};
