use ndarray::{Array3, ArrayView3, Axis};

use super::{NUM_HEATMAPS, NUM_SEGMENTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Rgb,
    Heatmap,
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    Heatmap,
    Segment,
}

impl AuxKind {
    pub fn channels(self) -> usize {
        match self {
            AuxKind::Heatmap => NUM_HEATMAPS,
            AuxKind::Segment => NUM_SEGMENTS,
        }
    }

    fn kind(self) -> ChannelKind {
        match self {
            AuxKind::Heatmap => ChannelKind::Heatmap,
            AuxKind::Segment => ChannelKind::Segment,
        }
    }
}

/// RGB channels followed by optional pose channels, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    data: Array3<f64>,
    kinds: Vec<ChannelKind>,
}

impl ChannelStack {
    pub fn rgb_only(rgb: ArrayView3<f64>) -> Result<Self> {
        check_rgb(&rgb)?;
        Ok(Self {
            data: rgb.to_owned(),
            kinds: vec![ChannelKind::Rgb; 3],
        })
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn kinds(&self) -> &[ChannelKind] {
        &self.kinds
    }

    pub fn channels(&self) -> usize {
        self.kinds.len()
    }
}

fn check_rgb(rgb: &ArrayView3<f64>) -> Result<()> {
    if rgb.len_of(Axis(0)) != 3 {
        return Err(Error::shape(format!(
            "rgb needs 3 channels, got {}",
            rgb.len_of(Axis(0))
        )));
    }
    if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("rgb values must lie in [0, 1]"));
    }
    Ok(())
}

/// Bilinear resize of every channel to `out_h x out_w` using half-pixel
/// centers, with edge clamping.
pub fn upsample_bilinear(src: ArrayView3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (c, in_h, in_w) = src.dim();
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, in_h);
    let xs = taps(out_w, in_w);
    let mut out = Array3::zeros((c, out_h, out_w));
    for ch in 0..c {
        let plane = src.index_axis(Axis(0), ch);
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                let top = plane[[y0, x0]] * (1.0 - wx) + plane[[y0, x1]] * wx;
                let bottom = plane[[y1, x0]] * (1.0 - wx) + plane[[y1, x1]] * wx;
                out[[ch, oy, ox]] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}

/// Upsamples pose maps to the RGB resolution, scales them by `scale`, clamps
/// to `[0, 1]` and appends them after the RGB channels.
pub fn stack_channels(
    rgb: ArrayView3<f64>,
    aux: ArrayView3<f64>,
    kind: AuxKind,
    scale: f64,
) -> Result<ChannelStack> {
    check_rgb(&rgb)?;
    let k = aux.len_of(Axis(0));
    if k != kind.channels() {
        return Err(Error::shape(format!(
            "{kind:?} stacking needs {} channels, got {k}",
            kind.channels()
        )));
    }
    if aux.len_of(Axis(1)) == 0 || aux.len_of(Axis(2)) == 0 {
        return Err(Error::shape("pose maps have zero spatial size"));
    }
    let (_, h, w) = rgb.dim();
    let mut up = upsample_bilinear(aux, h, w);
    up.mapv_inplace(|v| (v * scale).clamp(0.0, 1.0));

    let mut data = Array3::zeros((3 + k, h, w));
    data.slice_mut(ndarray::s![..3, .., ..]).assign(&rgb);
    data.slice_mut(ndarray::s![3.., .., ..]).assign(&up);
    let mut kinds = vec![ChannelKind::Rgb; 3];
    kinds.extend(std::iter::repeat_n(kind.kind(), k));
    Ok(ChannelStack { data, kinds })
}

/// Mean of each channel over a `grid x grid` lattice of equal cells,
/// concatenated channel-major with cells in row-major order.
pub fn pool_grid(data: ArrayView3<f64>, grid: usize) -> Result<Vec<f64>> {
    let (c, h, w) = data.dim();
    if grid == 0 || h % grid != 0 || w % grid != 0 {
        return Err(Error::invalid(format!(
            "grid {grid} does not divide spatial size {h}x{w}"
        )));
    }
    let (ch, cw) = (h / grid, w / grid);
    let inv = 1.0 / (ch * cw) as f64;
    let mut out = Vec::with_capacity(c * grid * grid);
    for plane in data.outer_iter() {
        for gy in 0..grid {
            for gx in 0..grid {
                let cell = plane.slice(ndarray::s![gy * ch..(gy + 1) * ch, gx * cw..(gx + 1) * cw]);
                out.push(cell.sum() * inv);
            }
        }
    }
    Ok(out)
}

pub fn pool_stacked_channels(stack: &ChannelStack, grid: usize) -> Result<Vec<f64>> {
    pool_grid(stack.data(), grid)
}
