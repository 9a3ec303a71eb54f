//! Subgraph retrieval over SPARQL knowledge graphs.
//!
//! The pipeline links question mentions to entities ([`linker`]), expands
//! relation paths from them with a beam search guided by a path scorer
//! ([`expander`], [`scorer`]), and materializes the triples along the kept
//! paths. [`preprocess`] builds training data for the scorer and
//! [`evaluator`] measures answer coverage.

pub mod error;
pub mod evaluator;
pub mod expander;
pub mod http;
pub mod kgdata;
pub mod kgsource;
pub mod linker;
pub mod preprocess;
pub mod scorer;
pub mod visualizer;

pub use error::{Error, Result};
