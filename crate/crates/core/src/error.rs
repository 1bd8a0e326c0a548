use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
    #[error("segment id {0} appears twice in one frame")]
    DuplicateSegmentId(u32),
    #[error("segments {0} and {1} overlap")]
    Overlap(u32, u32),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("propagator queried before any memory update")]
    EmptyMemory,
    #[error("external propagator: {0}")]
    External(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scene placement failed: {0}")]
    Placement(String),
    #[error("segmentation source failed at frame {frame}: {reason}")]
    Source { frame: usize, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
