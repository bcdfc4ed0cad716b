//! The multi-task training objective: identity cross-entropy, batch-hard
//! triplet loss, and the weighted combination with the color and type
//! heads. Every loss returns its analytic gradient.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Probability floor inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Normalization of the softmax cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XentMode {
    /// `-(1/N) sum_i y_i log p_i`, dividing by the class count `N`.
    #[default]
    ClassCount,
    /// The usual `-sum_i y_i log p_i`.
    Standard,
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Distribution(&'a [f64]),
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: what.to_string(),
        })
    }
}

/// Softmax cross-entropy of one logit vector and its gradient w.r.t. the
/// logits.
pub fn softmax_xent(logits: &[f64], target: Target<'_>, mode: XentMode) -> Result<(f64, Vec<f64>)> {
    let n = logits.len();
    if n < 2 {
        return Err(Error::invalid(format!("softmax needs at least 2 classes, got {n}")));
    }
    check_finite(logits.iter().copied(), "logits")?;

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let log_p: Vec<f64> = logits.iter().map(|&z| z - max - log_z).collect();
    let log_floor = PROB_FLOOR.ln();
    let scale = match mode {
        XentMode::ClassCount => 1.0 / n as f64,
        XentMode::Standard => 1.0,
    };

    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut accumulate = |i: usize, y: f64| {
        if y == 0.0 {
            return;
        }
        if log_p[i] >= log_floor {
            loss -= y * log_p[i];
            // d(-log p_i)/dz_j = p_j - delta_ij
            for (j, g) in grad.iter_mut().enumerate() {
                *g += y * log_p[j].exp();
            }
            grad[i] -= y;
        } else {
            loss -= y * log_floor;
        }
    };
    match target {
        Target::Class(c) => {
            if c >= n {
                return Err(Error::invalid(format!("target class {c} out of range for {n} classes")));
            }
            accumulate(c, 1.0);
        }
        Target::Distribution(y) => {
            if y.len() != n {
                return Err(Error::shape(format!("target has {} entries, logits {n}", y.len())));
            }
            for (i, &yi) in y.iter().enumerate() {
                accumulate(i, yi);
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Row-wise cross-entropy averaged over the batch.
pub fn softmax_xent_batch(
    logits: ArrayView2<f64>,
    labels: &[usize],
    mode: XentMode,
) -> Result<(f64, Array2<f64>)> {
    let rows = logits.nrows();
    if rows != labels.len() {
        return Err(Error::shape(format!("{rows} logit rows vs {} labels", labels.len())));
    }
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let inv = 1.0 / rows as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (r, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
        let (l, g) = softmax_xent(&row.to_vec(), Target::Class(label), mode)?;
        total += l;
        grad.row_mut(r).iter_mut().zip(g).for_each(|(o, v)| *o = v * inv);
    }
    Ok((total * inv, grad))
}

/// Squared Euclidean distance, accumulated left to right.
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All-pairs Euclidean distances between the rows of `features`.
pub fn pairwise_euclidean(features: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_finite(features.iter().copied(), "features")?;
    let n = features.nrows();
    let rows: Vec<Vec<f64>> = features.outer_iter().map(|r| r.to_vec()).collect();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(&rows[i], &rows[j]).max(0.0).sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    pub margin: f64,
    /// Added under the square root when differentiating distances.
    pub distance_epsilon: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            distance_epsilon: 1e-12,
        }
    }
}

impl TripletConfig {
    // Written negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::invalid("triplet margin must be non-negative"));
        }
        if !(self.distance_epsilon > 0.0) {
            return Err(Error::invalid("distance epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TripletLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
    /// Hardest positive per anchor.
    pub positives: Vec<usize>,
    /// Hardest negative per anchor.
    pub negatives: Vec<usize>,
}

/// Batch-hard triplet loss: for every anchor, hinge on the margin plus its
/// farthest same-id distance minus its nearest other-id distance, averaged
/// over anchors.
///
/// Loss values use exact distances; the gradient differentiates
/// `sqrt(s + eps)`. Mining ties go to the lowest index and a hinge sitting
/// exactly at zero contributes no gradient.
pub fn batch_hard_triplet<L: Copy + Eq + Ord + std::fmt::Debug>(
    features: ArrayView2<f64>,
    ids: &[L],
    cfg: &TripletConfig,
) -> Result<TripletLoss> {
    cfg.validate()?;
    let (n, d) = features.dim();
    if ids.len() != n {
        return Err(Error::shape(format!("{n} feature rows vs {} ids", ids.len())));
    }
    let mut counts: BTreeMap<L, usize> = BTreeMap::new();
    for &id in ids {
        *counts.entry(id).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::invalid("triplet batch needs at least two identities"));
    }
    if let Some((id, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::invalid(format!("identity {id:?} has a single sample in the batch")));
    }
    check_finite(features.iter().copied(), "features")?;

    let rows: Vec<Vec<f64>> = features.outer_iter().map(|r| r.to_vec()).collect();
    let mut sq = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = squared_distance(&rows[i], &rows[j]).max(0.0);
            sq[i * n + j] = s;
            sq[j * n + i] = s;
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, d));
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for a in 0..n {
        let (mut p, mut dp) = (usize::MAX, f64::NEG_INFINITY);
        let (mut q, mut dq) = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j == a {
                continue;
            }
            let dist = sq[a * n + j].sqrt();
            if ids[j] == ids[a] {
                if dist > dp {
                    (p, dp) = (j, dist);
                }
            } else if dist < dq {
                (q, dq) = (j, dist);
            }
        }
        positives.push(p);
        negatives.push(q);

        let hinge = cfg.margin + (dp - dq);
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        let wp = inv_n / (sq[a * n + p] + cfg.distance_epsilon).sqrt();
        let wn = inv_n / (sq[a * n + q] + cfg.distance_epsilon).sqrt();
        for k in 0..d {
            let gp = wp * (rows[a][k] - rows[p][k]);
            let gn = wn * (rows[a][k] - rows[q][k]);
            grad[[a, k]] += gp - gn;
            grad[[p, k]] -= gp;
            grad[[q, k]] += gn;
        }
    }
    Ok(TripletLoss {
        loss: loss * inv_n,
        grad,
        positives,
        negatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_htri: f64,
    pub lambda_xent: f64,
    pub lambda_color: f64,
    pub lambda_type: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_htri: 1.0,
            lambda_xent: 1.0,
            lambda_color: 0.125,
            lambda_type: 0.125,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_htri, self.lambda_xent, self.lambda_color, self.lambda_type];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("loss weights must be finite and non-negative"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdLoss {
    pub loss: f64,
    pub htri: f64,
    pub xent: f64,
    pub grad_features: Array2<f64>,
    pub grad_logits: Array2<f64>,
}

/// Identity objective: weighted triplet loss on the features plus weighted
/// batch-mean cross-entropy on the identity logits.
pub fn id_loss(
    features: ArrayView2<f64>,
    ids: &[usize],
    id_logits: ArrayView2<f64>,
    weights: &LossWeights,
    cfg: &TripletConfig,
    mode: XentMode,
) -> Result<IdLoss> {
    weights.validate()?;
    if id_logits.nrows() != features.nrows() {
        return Err(Error::shape(format!(
            "{} logit rows vs {} feature rows",
            id_logits.nrows(),
            features.nrows()
        )));
    }
    let trip = batch_hard_triplet(features, ids, cfg)?;
    let (xent, grad_logits) = softmax_xent_batch(id_logits, ids, mode)?;
    Ok(IdLoss {
        loss: weights.lambda_htri * trip.loss + weights.lambda_xent * xent,
        htri: trip.loss,
        xent,
        grad_features: trip.grad * weights.lambda_htri,
        grad_logits: grad_logits * weights.lambda_xent,
    })
}

/// Final objective: identity loss plus the weighted attribute losses.
pub fn total_loss(id_part: f64, color_loss: f64, type_loss: f64, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    for (name, v) in [("id", id_part), ("color", color_loss), ("type", type_loss)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} loss must be finite and non-negative, got {v}")));
        }
    }
    Ok(id_part + weights.lambda_color * color_loss + weights.lambda_type * type_loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub id: f64,
    pub htri: f64,
    pub xent: f64,
    pub color: f64,
    #[serde(rename = "type")]
    pub vtype: f64,
}

#[derive(Debug, Clone)]
pub struct LossGrads {
    pub features: Array2<f64>,
    pub id_logits: Array2<f64>,
    pub color_logits: Option<Array2<f64>>,
    pub type_logits: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct LossBundle {
    pub total: f64,
    pub components: LossComponents,
    pub grads: LossGrads,
}

/// Logits and labels of one attribute head.
#[derive(Debug, Clone, Copy)]
pub struct HeadInput<'a> {
    pub logits: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

/// The full weighted objective with gradients for every input. Attribute
/// heads passed as `None` contribute nothing.
#[allow(clippy::too_many_arguments)]
pub fn multitask_loss(
    features: ArrayView2<f64>,
    ids: &[usize],
    id_logits: ArrayView2<f64>,
    color: Option<HeadInput<'_>>,
    vtype: Option<HeadInput<'_>>,
    weights: &LossWeights,
    cfg: &TripletConfig,
    mode: XentMode,
) -> Result<LossBundle> {
    let id = id_loss(features, ids, id_logits, weights, cfg, mode)?;
    let head = |h: Option<HeadInput<'_>>, lambda: f64| -> Result<(f64, Option<Array2<f64>>)> {
        match h {
            None => Ok((0.0, None)),
            Some(h) => {
                let (l, g) = softmax_xent_batch(h.logits, h.labels, mode)?;
                Ok((l, Some(g * lambda)))
            }
        }
    };
    let (color_loss, color_grad) = head(color, weights.lambda_color)?;
    let (type_loss, type_grad) = head(vtype, weights.lambda_type)?;
    let total = total_loss(id.loss, color_loss, type_loss, weights)?;

    let components = LossComponents {
        id: id.loss,
        htri: id.htri,
        xent: id.xent,
        color: color_loss,
        vtype: type_loss,
    };
    debug_assert!(consistent(&components, total, weights));
    Ok(LossBundle {
        total,
        components,
        grads: LossGrads {
            features: id.grad_features,
            id_logits: id.grad_logits,
            color_logits: color_grad,
            type_logits: type_grad,
        },
    })
}

/// Checks `total = id + lc*color + lt*type` and `id = lh*htri + lx*xent` to
/// 1e-12 relative.
pub fn consistent(c: &LossComponents, total: f64, w: &LossWeights) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    close(c.id, w.lambda_htri * c.htri + w.lambda_xent * c.xent)
        && close(total, c.id + w.lambda_color * c.color + w.lambda_type * c.vtype)
}

/// Draws `p` distinct identities from `candidates` and `k` rows for each.
/// Identities with fewer than `k` rows are sampled with replacement.
pub fn sample_pk_indices<R: Rng + ?Sized>(
    labels: &[u32],
    candidates: &[usize],
    p: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if p == 0 || k == 0 {
        return Err(Error::invalid("P and K must be positive"));
    }
    let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in candidates {
        by_id.entry(labels[i]).or_default().push(i);
    }
    if by_id.len() < p {
        return Err(Error::invalid(format!(
            "need {p} identities for a PK batch, only {} available",
            by_id.len()
        )));
    }
    let ids: Vec<u32> = by_id.keys().copied().collect();
    let chosen: Vec<u32> = ids.choose_multiple(rng, p).copied().collect();
    let mut out = Vec::with_capacity(p * k);
    for id in chosen {
        let pool = &by_id[&id];
        if pool.len() >= k {
            let mut shuffled = pool.clone();
            shuffled.shuffle(rng);
            out.extend_from_slice(&shuffled[..k]);
        } else {
            out.extend((0..k).map(|_| *pool.choose(rng).expect("non-empty pool")));
        }
    }
    Ok(out)
}

/// PK batch over the train split of a manifest.
pub fn sample_pk_batch<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    p: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let labels: Vec<u32> = manifest.records.iter().map(|r| r.identity).collect();
    let train = manifest.indices_of(Split::Train);
    sample_pk_indices(&labels, &train, p, k, rng)
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
