//! Visual-audio-tactile cross-modal retrieval.
//!
//! A synthetic three-modality dataset, one encoder branch per modality,
//! multi-head cross-attention fusion of two branches, a two-stage trainer
//! (dominant-modality cross-entropy, then triplet alignment) and MAP-based
//! retrieval evaluation. See the `examples/` directory for entry points.

pub mod checkpoint;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod retrieval;
pub mod tensor_io;
pub mod training;

pub use error::{Error, Result};
