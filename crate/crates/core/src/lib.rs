//! One-shot pruning of recurrent networks at initialization by the
//! sensitivity of the temporal Jacobian spectrum.

pub mod analysis;
pub mod cells;
pub mod config;
pub mod criteria;
pub mod data;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
