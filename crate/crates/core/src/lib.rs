pub mod embeddings;
pub mod error;
pub mod align;
pub mod correspond;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod transform;

pub use error::{Error, Result};
