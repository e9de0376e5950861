//! Rehearsal-free class-incremental learning over frozen embeddings.
//!
//! Each class gets a trainable category prototype (the classifier weight)
//! plus a handful of example prototypes that imitate the class's embedding
//! distribution. Example prototypes are classified against every category
//! prototype seen so far, which keeps categories from different phases
//! apart without replaying old samples.

pub mod embedset;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod protobank;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
