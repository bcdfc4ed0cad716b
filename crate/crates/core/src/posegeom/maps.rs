use ndarray::Array3;

use super::tables::SegmentTable;
use super::{MAP_SIZE, NUM_HEATMAPS};
use crate::dataset::{ImageSize, KeypointSet};
use crate::error::{Error, Result};

/// Shared settings for heatmap and segment rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    /// `(width, height)` of the output maps.
    pub map_size: (usize, usize),
    /// Gaussian standard deviation in map pixels.
    pub sigma: f64,
    /// Keypoints below this confidence blank their channel.
    pub conf_threshold: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            map_size: (MAP_SIZE, MAP_SIZE),
            sigma: 2.0,
            conf_threshold: 0.1,
        }
    }
}

impl MapParams {
    fn check(&self) -> Result<()> {
        if self.map_size.0 == 0 || self.map_size.1 == 0 {
            return Err(Error::invalid("map size must be positive"));
        }
        Ok(())
    }

    fn scale(&self, image_size: ImageSize) -> Result<(f64, f64)> {
        if image_size.width == 0 || image_size.height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok((
            self.map_size.0 as f64 / f64::from(image_size.width),
            self.map_size.1 as f64 / f64::from(image_size.height),
        ))
    }
}

/// One Gaussian channel per keypoint, `36 x mh x mw`.
///
/// Map pixel `(row, col)` samples the Gaussian at map coordinate `(col, row)`,
/// so a keypoint scaled onto an integer coordinate peaks at exactly 1.
pub fn render_heatmaps(
    kps: &KeypointSet,
    image_size: ImageSize,
    params: &MapParams,
) -> Result<Array3<f64>> {
    params.check()?;
    if !(params.sigma > 0.0 && params.sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {}", params.sigma)));
    }
    let (sx, sy) = params.scale(image_size)?;
    let (mw, mh) = params.map_size;
    let inv_two_var = 1.0 / (2.0 * params.sigma * params.sigma);
    let mut out = Array3::zeros((NUM_HEATMAPS, mh, mw));
    for (k, p) in kps.points().iter().enumerate() {
        if p.confidence < params.conf_threshold {
            continue;
        }
        let (u, v) = (p.x * sx, p.y * sy);
        // Separable: exp(-(du^2 + dv^2)/2s^2) = gx(col) * gy(row).
        let gx: Vec<f64> = (0..mw)
            .map(|c| {
                let d = c as f64 - u;
                (-d * d * inv_two_var).exp()
            })
            .collect();
        let mut channel = out.index_axis_mut(ndarray::Axis(0), k);
        for (r, mut row) in channel.rows_mut().into_iter().enumerate() {
            let d = r as f64 - v;
            let gy = (-d * d * inv_two_var).exp();
            row.iter_mut().zip(&gx).for_each(|(o, &g)| *o = gy * g);
        }
    }
    Ok(out)
}

/// One binary mask per segment polygon, `13 x mh x mw`.
///
/// Polygons are filled with the even-odd rule, sampling each map pixel at its
/// center `(col + 0.5, row + 0.5)`. A segment with any vertex below the
/// confidence threshold stays blank.
pub fn rasterize_segments(
    kps: &KeypointSet,
    table: &SegmentTable,
    image_size: ImageSize,
    params: &MapParams,
) -> Result<Array3<f64>> {
    params.check()?;
    let (sx, sy) = params.scale(image_size)?;
    let (mw, mh) = params.map_size;
    let mut out = Array3::zeros((table.segments().len(), mh, mw));
    let mut polygon = Vec::new();
    let mut crossings = Vec::new();
    for (s, seg) in table.segments().iter().enumerate() {
        if seg
            .indices
            .iter()
            .any(|&k| kps.get(k).confidence < params.conf_threshold)
        {
            continue;
        }
        polygon.clear();
        polygon.extend(seg.indices.iter().map(|&k| {
            let p = kps.get(k);
            (p.x * sx, p.y * sy)
        }));
        let mut mask = out.index_axis_mut(ndarray::Axis(0), s);
        for (r, mut row) in mask.rows_mut().into_iter().enumerate() {
            let yc = r as f64 + 0.5;
            scanline_crossings(&polygon, yc, &mut crossings);
            for span in crossings.chunks_exact(2) {
                let start = (span[0] - 0.5).ceil().max(0.0);
                let end = (span[1] - 0.5).ceil().min(mw as f64);
                if end <= start {
                    continue;
                }
                for c in start as usize..end as usize {
                    row[c] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

/// Sorted x positions where the closed polygon crosses the line `y = yc`.
/// Edges are half-open in y so shared vertices are counted once.
fn scanline_crossings(polygon: &[(f64, f64)], yc: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = polygon.len();
    for i in 0..n {
        let (x0, y0) = polygon[i];
        let (x1, y1) = polygon[(i + 1) % n];
        if (y0 > yc) != (y1 > yc) {
            out.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    out.sort_by(f64::total_cmp);
}
