//! Image-only scorers over per-tile embeddings.

pub mod fa;
pub mod fd;
pub mod kmeans;
pub mod vendi;

pub use fa::{fa_stats, rank_fa, FaStats};
pub use fd::{rank_fd, rank_fd_detailed, select_k, FdParams, FdResult, KSelection};
pub use kmeans::{kmeans, Clustering};
pub use vendi::vendi_score;
