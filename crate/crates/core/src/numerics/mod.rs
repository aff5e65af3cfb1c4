//! Numerical building blocks.

pub mod kmeans;
pub mod linalg;
pub mod mlp;
pub mod nmf;
pub mod nnls;
pub mod rng;
pub mod sae;
pub mod spearman;
pub mod train;

pub use rng::Rng;
