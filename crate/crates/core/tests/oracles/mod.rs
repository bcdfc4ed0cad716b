//! Slow, obviously-correct reference implementations shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};

/// Plain double loop with a left-to-right sum.
pub fn naive_distances(q: ArrayView2<f64>, g: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((q.nrows(), g.nrows()));
    for i in 0..q.nrows() {
        for j in 0..g.nrows() {
            let mut s = 0.0;
            for k in 0..q.ncols() {
                let d = q[[i, k]] - g[[j, k]];
                s += d * d;
            }
            out[[i, j]] = s.sqrt();
        }
    }
    out
}

pub struct NaiveScores {
    pub map: f64,
    pub rank_k_map: f64,
    pub cmc: Vec<f64>,
    pub used: usize,
}

/// Sorts each full gallery row, drops junk, and walks the list.
/// `meta` entries are `(identity, camera)`.
pub fn naive_scores(
    dist: &Array2<f64>,
    qmeta: &[(u32, u32)],
    gmeta: &[(u32, u32)],
    exclude_junk: bool,
    skip_empty: bool,
    k: usize,
    max_rank: usize,
) -> Option<NaiveScores> {
    let mut ap_sum = 0.0;
    let mut apk_sum = 0.0;
    let mut hits = vec![0.0; max_rank];
    let mut used = 0;
    for (i, &(qid, qcam)) in qmeta.iter().enumerate() {
        let mut order: Vec<usize> = (0..gmeta.len()).collect();
        order.sort_by(|&a, &b| dist[[i, a]].partial_cmp(&dist[[i, b]]).unwrap().then(a.cmp(&b)));
        let kept: Vec<bool> = order
            .iter()
            .filter(|&&j| !(exclude_junk && gmeta[j] == (qid, qcam)))
            .map(|&j| gmeta[j].0 == qid)
            .collect();
        let npos = kept.iter().filter(|&&m| m).count();
        if npos == 0 {
            if skip_empty {
                continue;
            }
            used += 1;
            continue;
        }
        used += 1;
        let (mut found, mut ap, mut apk) = (0, 0.0, 0.0);
        for (r, &m) in kept.iter().enumerate() {
            if m {
                found += 1;
                let prec = found as f64 / (r + 1) as f64;
                ap += prec;
                if r < k {
                    apk += prec;
                }
            }
        }
        ap_sum += ap / npos as f64;
        apk_sum += apk / npos.min(k) as f64;
        if let Some(first) = kept.iter().position(|&m| m) {
            for (c, h) in hits.iter_mut().enumerate() {
                if first <= c {
                    *h += 1.0;
                }
            }
        }
    }
    if used == 0 {
        return None;
    }
    let n = used as f64;
    Some(NaiveScores {
        map: ap_sum / n,
        rank_k_map: apk_sum / n,
        cmc: hits.into_iter().map(|h| h / n).collect(),
        used,
    })
}

/// Batch-hard triplet loss by enumerating every (anchor, positive, negative)
/// triple: per anchor the worst triple's hinge, averaged.
pub fn brute_triplet(features: ArrayView2<f64>, ids: &[u32], margin: f64) -> f64 {
    let n = ids.len();
    let d = |a: usize, b: usize| {
        let mut s = 0.0;
        for k in 0..features.ncols() {
            let x = features[[a, k]] - features[[b, k]];
            s += x * x;
        }
        s.sqrt()
    };
    let mut total = 0.0;
    for a in 0..n {
        let mut worst = f64::NEG_INFINITY;
        for p in 0..n {
            if p == a || ids[p] != ids[a] {
                continue;
            }
            for q in 0..n {
                if ids[q] == ids[a] {
                    continue;
                }
                worst = worst.max(margin + d(a, p) - d(a, q));
            }
        }
        total += worst.max(0.0);
    }
    total / n as f64
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + step;
            let up = f(&xp);
            xp[i] = x[i] - step;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` with norms over the whole vector.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

/// Mean same-id pair distance over mean different-id pair distance, by
/// visiting every ordered pair.
pub fn naive_ratio(features: ArrayView2<f64>, ids: &[u32]) -> f64 {
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..ids.len() {
        for j in 0..ids.len() {
            if i == j {
                continue;
            }
            let d = (&features.row(i) - &features.row(j)).mapv(|v| v * v).sum().sqrt();
            if ids[i] == ids[j] {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                ne += 1;
            }
        }
    }
    (intra / ni as f64) / (inter / ne as f64)
}
