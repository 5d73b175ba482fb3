//! Deterministic simulator of a relaxed-consistency feed-following service,
//! with an offline detector for observable timeline conflicts and the
//! analytics that summarize them.

pub mod analytics;
pub mod config;
pub mod detect;
pub mod error;
pub mod feed;
pub mod logs;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
