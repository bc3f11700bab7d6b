//! Question answering over multi-agency GTFS data.
//!
//! The crate covers the whole offline side of the system: feed ingestion,
//! the schema catalog and prompt, model providers, exemplar retrieval, the
//! SQL guard, the agent pipeline, route maps and the evaluation harness.

pub mod agent;
pub mod api;
pub mod catalog;
pub mod config;
pub mod db;
mod digest;
pub mod eval;
pub mod exemplars;
pub mod guard;
pub mod ingest;
pub mod map;
pub mod provider;
#[cfg(test)]
mod testutil;

pub use db::{Cell, DatabaseHandle, DbError, ReadPool, RowSet};
pub use digest::short_digest;
