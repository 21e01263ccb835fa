//! Detection of cookie synchronization in captured HTTP traffic.

pub mod cli;
pub mod detect;
pub mod entity;
pub mod error;
pub mod identifiers;
pub mod ingest;
pub mod model;
pub mod party;
pub mod profile;
pub mod psl;
pub mod report;
pub mod synth;
pub mod url;

pub use error::{Error, Result};
