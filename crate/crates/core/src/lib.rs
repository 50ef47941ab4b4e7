pub mod allocator;
pub mod diffcore;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
