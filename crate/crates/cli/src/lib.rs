//! Library surface of the CLI crate: configuration resolution, the proof
//! lint, and the persisted run record. Shared between the `mechanic` binary
//! and the integration tests.

pub mod config;
pub mod lint;
pub mod record;
