//! Moving-object detection and tracking for wide-area motion imagery.
//!
//! The processing chain runs: registration of consecutive frames, median
//! background subtraction, CNN gating of candidate cells, regression-based
//! splitting of merged blobs, and GM-PHD tracking. A synthetic scene
//! generator supplies ground truth for every stage.

pub mod background;
pub mod config;
pub mod detector;
pub mod error;
pub mod evalmetrics;
pub mod gmphd;
pub mod imgcore;
pub mod nn;
pub mod pipeline;
pub mod records;
pub mod registration;
pub mod synth;

pub use error::{Error, Result};
pub use imgcore::{BinaryMask, Blob, Frame};
pub use registration::{Homography, TransformChain};
