use std::io;

use thiserror::Error;

use crate::sim::VirtualTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled at {fire_at}, before the current time {now}")]
    PastEvent {
        fire_at: VirtualTime,
        now: VirtualTime,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible network parameters: {0}")]
    Infeasible(String),

    #[error("unknown producer {0}")]
    UnknownProducer(u32),

    #[error("unknown consumer {0}")]
    UnknownConsumer(u32),

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("no responses in the analysis window")]
    EmptyAnalysis,

    #[error("malformed record on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("workload validation failed: {0}")]
    Validation(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}
