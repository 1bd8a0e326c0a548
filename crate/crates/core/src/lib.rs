//! Decoupled video segmentation fusion.
//!
//! Image-level segmentations are denoised by an in-clip consensus over a few
//! future frames, then merged with masks carried forward by a temporal
//! propagator. The crate also ships the reference propagators, a synthetic
//! scene generator with image-model noise, and the evaluation metrics.

pub mod assignment;
pub mod association;
pub mod consensus;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod synth;

pub use error::{Error, Result};
pub use mask::{render_non_overlapping, BinaryMask, ClassId, Segment, SegmentId, Segmentation};
