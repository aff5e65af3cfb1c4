pub mod discovery;
pub mod error;
pub mod explanation;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod report;
pub mod sanity;
pub mod surrogates;

pub use error::{Error, Result};
