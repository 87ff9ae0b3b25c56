//! Multi-claim fact checking over a knowledge graph.

pub mod autodiff;
pub mod claimgen;
pub mod error;
pub mod kgstore;
pub mod lescmodel;
pub mod scoring;
pub mod synth;
pub mod trainer;

pub use error::{LescError, Result};
