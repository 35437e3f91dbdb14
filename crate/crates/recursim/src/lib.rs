//! Simulations of models retrained on their own outputs: a classifier fed
//! self-degrading labels, and a summarizer fine-tuned on filtered
//! self-generated summaries.

pub mod data;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod learners;
pub mod metrics;

pub use error::{Error, Result};
