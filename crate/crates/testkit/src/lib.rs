//! Test assets for the srtk crates: fixture graphs, a planted-path dataset
//! generator, an oracle scorer, an exhaustive path ranker and mock HTTP
//! endpoints speaking the SPARQL, linker and embedding wire formats.

pub mod brute;
pub mod fixtures;
pub mod mock;
pub mod planted;

pub use brute::brute_force_paths;
pub use fixtures::{g0, g0_store, random_fixture, random_question, G0_TEXT};
pub use mock::{
    EmbedMock, Fault, MockRequest, MockResponse, MockServer, RelMock, SparqlMock, SpotlightMock,
};
pub use planted::{generate_planted, OracleScorer, PlantedInstance};
