//! Pose representations built from the 36-keypoint vehicle model: the
//! normalized pose vector, per-keypoint heatmaps, segment masks, channel
//! stacking with the RGB input, and keypoint accuracy (PCK).

mod maps;
mod pck;
mod stack;
mod tables;

pub use maps::{rasterize_segments, render_heatmaps, MapParams};
pub use pck::{pck_evaluate, PckParams, PckReport};
pub use stack::{
    pool_grid, pool_stacked_channels, stack_channels, upsample_bilinear, AuxKind, ChannelKind,
    ChannelStack,
};
pub use tables::{
    BodyPart, FlipPairs, GroupTable, KeypointLayout, Segment, SegmentTable, NUM_SEGMENTS,
};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageSize, Keypoint, KeypointSet, NUM_KEYPOINTS};
use crate::error::{Error, Result};

pub const POSE_VECTOR_LEN: usize = 3 * NUM_KEYPOINTS;
pub const NUM_HEATMAPS: usize = NUM_KEYPOINTS;
pub const INPUT_SIZE: usize = 256;
pub const MAP_SIZE: usize = 64;

/// `(x, y, confidence)` for each keypoint with coordinates mapped into
/// `[-0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVector(pub [f64; POSE_VECTOR_LEN]);

impl PoseVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn normalize_keypoints(kps: &KeypointSet, image_size: ImageSize) -> Result<PoseVector> {
    if image_size.width == 0 || image_size.height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    let (w, h) = (f64::from(image_size.width), f64::from(image_size.height));
    let mut out = [0.0; POSE_VECTOR_LEN];
    for (chunk, p) in out.chunks_exact_mut(3).zip(kps.points()) {
        chunk[0] = (p.x / w - 0.5).clamp(-0.5, 0.5);
        chunk[1] = (p.y / h - 0.5).clamp(-0.5, 0.5);
        chunk[2] = p.confidence;
    }
    Ok(PoseVector(out))
}

/// Mirrors keypoints about the vertical image axis (`x -> w - x`) and swaps
/// left/right partners. Applying it twice restores the input up to rounding.
pub fn flip_horizontal(kps: &KeypointSet, image_width: f64, pairs: &FlipPairs) -> KeypointSet {
    let src = kps.points();
    let points: [Keypoint; NUM_KEYPOINTS] = std::array::from_fn(|k| {
        let p = src[pairs.partner(k)];
        Keypoint::new(image_width - p.x, p.y, p.confidence)
    });
    KeypointSet::new(points).expect("reflection keeps coordinates finite")
}

/// Which keypoint-derived maps get stacked onto the appearance input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoseChannels {
    None,
    #[default]
    Heatmap,
    Segment,
}

/// Renders the selected maps at map resolution and average-pools them on a
/// `grid x grid` lattice. Returns an empty vector for [`PoseChannels::None`].
pub fn pose_map_descriptor(
    kps: &KeypointSet,
    image_size: ImageSize,
    channels: PoseChannels,
    layout: &KeypointLayout,
    params: &MapParams,
    grid: usize,
) -> Result<Vec<f64>> {
    let maps: Array3<f64> = match channels {
        PoseChannels::None => return Ok(Vec::new()),
        PoseChannels::Heatmap => render_heatmaps(kps, image_size, params)?,
        PoseChannels::Segment => rasterize_segments(kps, &layout.segments, image_size, params)?,
    };
    pool_grid(maps.view(), grid)
}

pub fn pose_map_descriptor_len(channels: PoseChannels, grid: usize) -> usize {
    let c = match channels {
        PoseChannels::None => 0,
        PoseChannels::Heatmap => NUM_HEATMAPS,
        PoseChannels::Segment => NUM_SEGMENTS,
    };
    c * grid * grid
}
