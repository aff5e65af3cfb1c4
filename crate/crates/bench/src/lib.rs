//! End-to-end runs over the concept-explanation toolkit: file formats,
//! synthetic data, benchmarks, the concept-count sweep and report output.

pub mod bundle;
pub mod error;
pub mod manifest;
pub mod npy;
pub mod pipeline;
pub mod report_io;
pub mod svg;
pub mod sweep;
pub mod synthetic;

pub use error::{BenchError, Result};
