use serde::{Serialize, Serializer};

use super::tables::{BodyPart, GroupTable};
use crate::dataset::{BBox, KeypointSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PckParams {
    /// Fraction of the bounding-box diagonal used as the reference length.
    pub reference_ratio: f64,
    /// Fraction of the reference length within which a keypoint is correct.
    pub threshold_multiplier: f64,
}

impl Default for PckParams {
    fn default() -> Self {
        Self {
            reference_ratio: 0.25,
            threshold_multiplier: 0.5,
        }
    }
}

impl PckParams {
    pub fn radius(&self, bbox: &BBox) -> f64 {
        self.threshold_multiplier * self.reference_ratio * bbox.diagonal()
    }
}

/// Percent of correct keypoints per body part and overall. A group without
/// any evaluable keypoint is `None` rather than zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PckReport {
    pub per_group: [Option<f64>; 6],
    /// Keypoint-weighted mean over every evaluable keypoint.
    pub mean: Option<f64>,
}

impl PckReport {
    pub fn group(&self, part: BodyPart) -> Option<f64> {
        self.per_group[part.index()]
    }
}

#[derive(Serialize)]
struct PckJson {
    wheel: Option<f64>,
    fender: Option<f64>,
    rear: Option<f64>,
    front: Option<f64>,
    rear_window: Option<f64>,
    front_window: Option<f64>,
    mean: Option<f64>,
}

impl Serialize for PckReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let r = |v: Option<f64>| v.map(|x| (x * 100.0).round() / 100.0);
        let g = &self.per_group;
        PckJson {
            wheel: r(g[0]),
            fender: r(g[1]),
            rear: r(g[2]),
            front: r(g[3]),
            rear_window: r(g[4]),
            front_window: r(g[5]),
            mean: r(self.mean),
        }
        .serialize(serializer)
    }
}

/// Scores predicted keypoints against ground truth. Ground-truth keypoints
/// with confidence 0 are not evaluable; a keypoint is correct when its error
/// is at most `threshold_multiplier * reference_ratio * bbox diagonal`.
pub fn pck_evaluate(
    pred: &[KeypointSet],
    gt: &[KeypointSet],
    bboxes: &[BBox],
    groups: &GroupTable,
    params: &PckParams,
) -> Result<PckReport> {
    if pred.len() != gt.len() || gt.len() != bboxes.len() {
        return Err(Error::shape(format!(
            "pck inputs differ in length: {} predictions, {} ground truths, {} boxes",
            pred.len(),
            gt.len(),
            bboxes.len()
        )));
    }
    let mut correct = [0usize; 6];
    let mut total = [0usize; 6];
    for ((p, g), bbox) in pred.iter().zip(gt).zip(bboxes) {
        let radius = params.radius(bbox);
        for (k, (pk, gk)) in p.points().iter().zip(g.points()).enumerate() {
            if gk.confidence <= 0.0 {
                continue;
            }
            let part = groups.part_of(k).index();
            total[part] += 1;
            if (pk.x - gk.x).hypot(pk.y - gk.y) <= radius {
                correct[part] += 1;
            }
        }
    }
    let pct = |c: usize, t: usize| (t > 0).then(|| 100.0 * c as f64 / t as f64);
    let per_group = std::array::from_fn(|i| pct(correct[i], total[i]));
    let mean = pct(correct.iter().sum(), total.iter().sum());
    Ok(PckReport { per_group, mean })
}
