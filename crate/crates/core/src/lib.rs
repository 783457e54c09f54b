//! Neural topic modelling against soft label targets.
//!
//! The engine trains a ProdLDA-style variational topic model to reconstruct
//! temperature-scaled next-token distributions (restricted to a fixed topic
//! vocabulary) from dense document embeddings. Everything needed for a
//! desk-scale run lives here: corpus preprocessing, target construction, the
//! model with hand-written reverse-mode gradients, an Adam trainer, the
//! evaluation metrics and a synthetic corpus generator that stands in for a
//! language model.

pub mod checkpoint;
pub mod corpus;
pub mod dtm;
pub mod error;
pub mod evalsuite;
pub mod pipeline;
pub mod seed;
pub mod sweep;
pub mod synth;
pub mod targets;
pub mod topicmodel;
pub mod trainer;

pub use error::{Error, Result};
