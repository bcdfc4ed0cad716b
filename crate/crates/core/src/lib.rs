//! Numeric core for pose-aware multi-task vehicle re-identification.
//!
//! - [`dataset`]: sample records, the JSONL manifest and the binary embedding format.
//! - [`posegeom`]: keypoint normalization, heatmaps, segment masks, channel stacking, PCK.
//! - [`losses`]: softmax cross-entropy, batch-hard triplet loss and their weighted combination.
//! - [`toynet`]: a small multi-task network with hand-written backward pass.
//! - [`metrics`]: distance matrices, ranking, CMC, mAP and the other retrieval metrics.
//! - [`synthgen`]: seeded synthetic datasets with identity, attribute and pose structure.

pub mod dataset;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod posegeom;
pub mod synthgen;
pub mod toynet;

pub use error::{Error, Result};
