//! Knowledge-graph path retrieval with entropy-based conflict filtering for
//! retrieval-augmented generation.
//!
//! The pipeline turns retrieved text into a knowledge graph ([`graph`]),
//! ranks short reasoning paths against the query ([`retrieval`]), keeps the
//! paths that raise the model's answer entropy above a threshold
//! ([`conflict`]) and answers from those paths alone. [`pipeline`] wires the
//! stages together and [`eval`] scores runs over datasets.

pub mod conflict;
pub mod eval;
pub mod gateway;
pub mod graph;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod text;
