use std::cmp::Ordering;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{EvalProtocol, ItemMeta};
use crate::error::{Error, Result};

/// Gallery order for one query: ascending distance, lower index first on ties.
pub fn rank_row(dists: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    order
}

pub fn rank_gallery(dmat: ArrayView2<f64>) -> Vec<Vec<usize>> {
    let rows: Vec<Vec<f64>> = dmat.outer_iter().map(|r| r.to_vec()).collect();
    rows.par_iter().map(|r| rank_row(r)).collect()
}

#[inline]
fn is_junk(q: ItemMeta, g: ItemMeta, protocol: &EvalProtocol) -> bool {
    protocol.exclude_same_camera_same_id && q.identity == g.identity && q.camera == g.camera
}

/// 1-based ranks of the true matches among the non-junk gallery entries, in
/// increasing order.
pub(crate) fn positive_ranks_from_order(
    order: &[usize],
    query: ItemMeta,
    gallery: &[ItemMeta],
    protocol: &EvalProtocol,
) -> Vec<usize> {
    let mut rank = 0;
    let mut out = Vec::new();
    for &j in order {
        let g = gallery[j];
        if is_junk(query, g, protocol) {
            continue;
        }
        rank += 1;
        if g.identity == query.identity {
            out.push(rank);
        }
    }
    out
}

/// Same ranks as [`positive_ranks_from_order`] without sorting the gallery:
/// each positive's rank is one plus the number of valid entries ordered
/// before it by `(distance, index)`.
pub(crate) fn positive_ranks_by_counting(
    dists: &[f64],
    query: ItemMeta,
    gallery: &[ItemMeta],
    protocol: &EvalProtocol,
) -> Vec<usize> {
    let key_cmp = |a: usize, b: usize| dists[a].total_cmp(&dists[b]).then(a.cmp(&b));
    let mut positives: Vec<usize> = (0..gallery.len())
        .filter(|&j| gallery[j].identity == query.identity && !is_junk(query, gallery[j], protocol))
        .collect();
    if positives.is_empty() {
        return Vec::new();
    }
    positives.sort_by(|&a, &b| key_cmp(a, b));

    // below[m] counts negatives ordered between positive m-1 and positive m.
    let mut below = vec![0usize; positives.len() + 1];
    for (j, &g) in gallery.iter().enumerate() {
        if g.identity == query.identity || is_junk(query, g, protocol) {
            continue;
        }
        let slot = positives.partition_point(|&p| key_cmp(p, j) == Ordering::Less);
        below[slot] += 1;
    }
    let mut negatives_before = 0;
    positives
        .iter()
        .enumerate()
        .map(|(m, _)| {
            negatives_before += below[m];
            m + 1 + negatives_before
        })
        .collect()
}

/// Average precision from sorted positive ranks, optionally truncated to the
/// top `k` entries with denominator `min(|positives|, k)`.
pub(crate) fn average_precision(ranks: &[usize], top_k: Option<usize>) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let limit = top_k.unwrap_or(usize::MAX);
    let hits: f64 = ranks
        .iter()
        .enumerate()
        .take_while(|(_, &r)| r <= limit)
        .map(|(m, &r)| (m + 1) as f64 / r as f64)
        .sum();
    hits / ranks.len().min(limit) as f64
}

fn check_ranked(ranked: &[Vec<usize>], query_meta: &[ItemMeta], gallery_meta: &[ItemMeta]) -> Result<()> {
    if ranked.len() != query_meta.len() {
        return Err(Error::shape(format!(
            "{} ranked lists vs {} queries",
            ranked.len(),
            query_meta.len()
        )));
    }
    if let Some(bad) = ranked.iter().find(|r| r.len() != gallery_meta.len()) {
        return Err(Error::shape(format!(
            "ranked list of length {} vs gallery of {}",
            bad.len(),
            gallery_meta.len()
        )));
    }
    Ok(())
}

/// Per-query positive ranks with skipped queries removed (when the protocol
/// skips them). Errors if nothing is left.
fn used_ranks(
    ranked: &[Vec<usize>],
    query_meta: &[ItemMeta],
    gallery_meta: &[ItemMeta],
    protocol: &EvalProtocol,
) -> Result<Vec<Vec<usize>>> {
    check_ranked(ranked, query_meta, gallery_meta)?;
    let used: Vec<Vec<usize>> = ranked
        .iter()
        .zip(query_meta)
        .map(|(order, &q)| positive_ranks_from_order(order, q, gallery_meta, protocol))
        .filter(|r| !(protocol.skip_queries_without_positives && r.is_empty()))
        .collect();
    if used.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(used)
}

pub(crate) fn cmc_from_ranks(ranks: &[Vec<usize>], max_rank: usize) -> Vec<f64> {
    let mut hits = vec![0usize; max_rank];
    for r in ranks {
        if let Some(&first) = r.first() {
            if first <= max_rank {
                hits[first - 1..].iter_mut().for_each(|h| *h += 1);
            }
        }
    }
    let n = ranks.len() as f64;
    hits.into_iter().map(|h| h as f64 / n).collect()
}

/// Rank-k hit rates for `k = 1..=cmc_max_rank`, averaged over used queries.
pub fn cmc_curve(
    ranked: &[Vec<usize>],
    query_meta: &[ItemMeta],
    gallery_meta: &[ItemMeta],
    protocol: &EvalProtocol,
) -> Result<Vec<f64>> {
    let ranks = used_ranks(ranked, query_meta, gallery_meta, protocol)?;
    Ok(cmc_from_ranks(&ranks, protocol.cmc_max_rank))
}

/// Mean average precision; `top_k` restricts each query to its first `k`
/// valid matches.
pub fn mean_ap(
    ranked: &[Vec<usize>],
    query_meta: &[ItemMeta],
    gallery_meta: &[ItemMeta],
    protocol: &EvalProtocol,
    top_k: Option<usize>,
) -> Result<f64> {
    if top_k == Some(0) {
        return Err(Error::invalid("top K must be at least 1"));
    }
    let ranks = used_ranks(ranked, query_meta, gallery_meta, protocol)?;
    Ok(ranks.iter().map(|r| average_precision(r, top_k)).sum::<f64>() / ranks.len() as f64)
}
