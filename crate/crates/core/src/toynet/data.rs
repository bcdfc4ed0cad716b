use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, EmbeddingSet, Split};
use crate::error::{Error, Result};
use crate::posegeom::{
    normalize_keypoints, pose_map_descriptor, pose_map_descriptor_len, KeypointLayout, MapParams, PoseChannels,
    POSE_VECTOR_LEN,
};

/// Per-sample network inputs and labels, rows aligned with the manifest.
#[derive(Debug, Clone)]
pub struct ToyInputs {
    /// Appearance embedding followed by the pooled pose maps, unstandardized.
    pub descriptors: Array2<f64>,
    pub poses: Array2<f64>,
    pub identities: Vec<u32>,
    pub cameras: Vec<u32>,
    pub colors: Vec<usize>,
    pub types: Vec<usize>,
    pub splits: Vec<Split>,
}

impl ToyInputs {
    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn rows_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

/// Builds descriptors as `embedding ++ pooled pose maps` and the 108-value
/// pose vectors from each record's keypoints.
pub fn build_inputs(
    manifest: &DatasetManifest,
    embeddings: &EmbeddingSet,
    layout: &KeypointLayout,
    channels: PoseChannels,
    grid: usize,
) -> Result<ToyInputs> {
    if embeddings.len() != manifest.len() {
        return Err(Error::shape(format!(
            "{} manifest records vs {} embedding rows",
            manifest.len(),
            embeddings.len()
        )));
    }
    if grid == 0 {
        return Err(Error::invalid("pool grid must be at least 1"));
    }
    let emb = embeddings.to_f64();
    let map_len = pose_map_descriptor_len(channels, grid);
    let params = MapParams::default();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = manifest
        .records
        .par_iter()
        .map(|r| {
            let kps = r.keypoints.as_ref().ok_or_else(|| {
                Error::invalid(format!("record {} has no keypoints; the network needs them", r.image_id))
            })?;
            let maps = pose_map_descriptor(kps, r.image_size, channels, layout, &params, grid)?;
            let pose = normalize_keypoints(kps, r.image_size)?;
            Ok((maps, pose.as_slice().to_vec()))
        })
        .collect::<Result<_>>()?;

    let d = emb.ncols() + map_len;
    let mut descriptors = Array2::zeros((manifest.len(), d));
    let mut poses = Array2::zeros((manifest.len(), POSE_VECTOR_LEN));
    for (i, (maps, pose)) in rows.into_iter().enumerate() {
        let mut row = descriptors.row_mut(i);
        row.slice_mut(ndarray::s![..emb.ncols()]).assign(&emb.row(i));
        row.slice_mut(ndarray::s![emb.ncols()..]).iter_mut().zip(maps).for_each(|(o, v)| *o = v);
        poses.row_mut(i).iter_mut().zip(pose).for_each(|(o, v)| *o = v);
    }
    let recs = &manifest.records;
    Ok(ToyInputs {
        descriptors,
        poses,
        identities: recs.iter().map(|r| r.identity).collect(),
        cameras: recs.iter().map(|r| r.camera).collect(),
        colors: recs.iter().map(|r| r.color).collect(),
        types: recs.iter().map(|r| r.vtype).collect(),
        splits: recs.iter().map(|r| r.split).collect(),
    })
}

/// Column-wise z-scoring with statistics from the training rows. Columns
/// that are constant there are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: ArrayView2<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot standardize with no training rows"));
        }
        let sel = data.select(Axis(0), rows);
        let mean = sel.mean_axis(Axis(0)).expect("non-empty");
        let var = sel.var_axis(Axis(0), 0.0);
        Ok(Self {
            mean: mean.to_vec(),
            scale: var.iter().map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect(),
        })
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.mean.len() {
            return Err(Error::shape(format!(
                "input width {} vs standardizer width {}",
                data.ncols(),
                self.mean.len()
            )));
        }
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardize_train_rows() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [100.0, -1.0]];
        let s = Standardizer::fit(x.view(), &[0, 1]).unwrap();
        let y = s.apply(x.view()).unwrap();
        assert_eq!(y.row(0).to_vec(), vec![-1.0, 0.0]);
        assert_eq!(y.row(1).to_vec(), vec![1.0, 0.0]);
        assert_eq!(y[[2, 1]], -6.0);
        assert!(Standardizer::fit(x.view(), &[]).is_err());
    }
}
