//! Retrieval evaluation: distances, ranking, CMC, mAP and rank-K mAP under
//! the Market1501 junk rule, plus attribute accuracy and the intra/inter
//! variability ratio.

mod distance;
mod ranking;

pub use distance::{distance_matrix, distance_matrix_serial, euclidean, squared_euclidean};
pub use ranking::{cmc_curve, mean_ap, rank_gallery, rank_row};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use distance::{check_pair, distance_tile, row_slices};
use ranking::{average_precision, cmc_from_ranks, positive_ranks_by_counting};

/// Identity and camera of one embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ItemMeta {
    pub identity: u32,
    pub camera: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    /// Drop gallery entries sharing both identity and camera with the query.
    pub exclude_same_camera_same_id: bool,
    /// Queries without any valid match are left out of the averages. When
    /// false they contribute AP 0 and no CMC hit.
    pub skip_queries_without_positives: bool,
    #[serde(alias = "rank_k_map_K")]
    pub rank_k_map_k: usize,
    pub cmc_max_rank: usize,
    /// Query rows per distance tile; bounds working memory to about
    /// `tile_rows * gallery * 8` bytes per thread.
    pub tile_rows: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            exclude_same_camera_same_id: true,
            skip_queries_without_positives: true,
            rank_k_map_k: 100,
            cmc_max_rank: 20,
            tile_rows: 64,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.rank_k_map_k == 0 {
            return Err(Error::invalid("rank_k_map_K must be at least 1"));
        }
        if self.cmc_max_rank == 0 {
            return Err(Error::invalid("cmc_max_rank must be at least 1"));
        }
        if self.tile_rows == 0 {
            return Err(Error::invalid("tile_rows must be at least 1"));
        }
        Ok(())
    }
}

/// Retrieval scores. Rates are fractions; attribute accuracies are
/// percentages (serialized as fractions).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub rank_k_map: f64,
    /// The K of `rank_k_map`.
    pub rank_k: usize,
    pub cmc: Vec<f64>,
    pub color_accuracy: Option<f64>,
    pub type_accuracy: Option<f64>,
    pub variability_ratio: Option<f64>,
    pub n_queries_used: usize,
    pub n_queries_skipped: usize,
}

impl EvalReport {
    /// Hit rate at rank `k` (1-based), if within the computed range.
    pub fn rank(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.cmc.get(i)).copied()
    }
}

/// JSON form: accuracies as fractions, the rank-K mAP keyed by its K
/// (`rank100_mAP` by default).
impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = serializer.serialize_map(Some(8))?;
        m.serialize_entry("mAP", &self.map)?;
        m.serialize_entry(&format!("rank{}_mAP", self.rank_k), &self.rank_k_map)?;
        m.serialize_entry("cmc", &self.cmc)?;
        m.serialize_entry("color_acc", &self.color_accuracy.map(|p| p / 100.0))?;
        m.serialize_entry("type_acc", &self.type_accuracy.map(|p| p / 100.0))?;
        m.serialize_entry("variability_ratio", &self.variability_ratio)?;
        m.serialize_entry("n_queries_used", &self.n_queries_used)?;
        m.serialize_entry("n_queries_skipped", &self.n_queries_skipped)?;
        m.end()
    }
}

/// `100 * correct / total`.
pub fn attribute_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("attribute accuracy of an empty set"));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / truth.len() as f64)
}

/// Mean same-identity pairwise distance over mean different-identity
/// pairwise distance.
pub fn intra_inter_ratio(features: ArrayView2<f64>, ids: &[u32]) -> Result<f64> {
    if features.nrows() != ids.len() {
        return Err(Error::shape(format!(
            "{} feature rows vs {} ids",
            features.nrows(),
            ids.len()
        )));
    }
    check_pair(&features, &features)?;
    let std = features.as_standard_layout();
    let rows = row_slices(&std);
    // Per-row partial sums, reduced in row order so the result is independent
    // of scheduling.
    let partial: Vec<(f64, usize, f64, usize)> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
            for j in i + 1..rows.len() {
                let d = euclidean(rows[i], rows[j]);
                if ids[i] == ids[j] {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    ne += 1;
                }
            }
            (intra, ni, inter, ne)
        })
        .collect();
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
    for (a, b, c, d) in partial {
        intra += a;
        ni += b;
        inter += c;
        ne += d;
    }
    if ni == 0 {
        return Err(Error::invalid("no same-identity pairs"));
    }
    if ne == 0 {
        return Err(Error::invalid("fewer than two identities"));
    }
    let inter_mean = inter / ne as f64;
    if inter_mean == 0.0 {
        return Err(Error::invalid("mean inter-identity distance is zero"));
    }
    Ok((intra / ni as f64) / inter_mean)
}

/// Features plus per-row metadata for one side of an evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalSide<'a> {
    pub features: ArrayView2<'a, f64>,
    pub meta: &'a [ItemMeta],
}

/// Predicted and true labels for one attribute.
#[derive(Debug, Clone, Copy)]
pub struct LabelPair<'a> {
    pub predicted: &'a [usize],
    pub truth: &'a [usize],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalExtras<'a> {
    pub color: Option<LabelPair<'a>>,
    pub vtype: Option<LabelPair<'a>>,
    /// Also compute the variability ratio over query and gallery together.
    /// Quadratic in the total item count.
    pub variability_ratio: bool,
}

fn check_side(name: &str, side: &EvalSide) -> Result<()> {
    if side.features.nrows() != side.meta.len() {
        return Err(Error::shape(format!(
            "{name}: {} feature rows vs {} metadata rows",
            side.features.nrows(),
            side.meta.len()
        )));
    }
    Ok(())
}

/// Valid-match ranks for every query, computed tile by tile without
/// materializing the full distance matrix.
fn all_positive_ranks(query: &EvalSide, gallery: &EvalSide, protocol: &EvalProtocol) -> Vec<Vec<usize>> {
    let qstd = query.features.as_standard_layout();
    let gstd = gallery.features.as_standard_layout();
    let qrows = row_slices(&qstd);
    let grows = row_slices(&gstd);
    let g = grows.len();
    let tiles: Vec<Vec<Vec<usize>>> = qrows
        .par_chunks(protocol.tile_rows)
        .zip(query.meta.par_chunks(protocol.tile_rows))
        .map(|(qs, metas)| {
            let mut buf = vec![0.0; qs.len() * g];
            distance_tile(qs, &grows, &mut buf);
            metas
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    positive_ranks_by_counting(&buf[i * g..(i + 1) * g], m, gallery.meta, protocol)
                })
                .collect()
        })
        .collect();
    tiles.into_iter().flatten().collect()
}

/// Full evaluation in one pass over query tiles. Deterministic for any
/// thread count and tile size.
pub fn evaluate(
    query: EvalSide,
    gallery: EvalSide,
    protocol: &EvalProtocol,
    extras: &EvalExtras,
) -> Result<EvalReport> {
    protocol.validate()?;
    check_side("query", &query)?;
    check_side("gallery", &gallery)?;
    check_pair(&query.features, &gallery.features)?;

    let all = all_positive_ranks(&query, &gallery, protocol);
    let n_total = all.len();
    let used: Vec<Vec<usize>> = all
        .into_iter()
        .filter(|r| !(protocol.skip_queries_without_positives && r.is_empty()))
        .collect();
    if used.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = used.len() as f64;
    let map = used.iter().map(|r| average_precision(r, None)).sum::<f64>() / n;
    let rank_k_map = used
        .iter()
        .map(|r| average_precision(r, Some(protocol.rank_k_map_k)))
        .sum::<f64>()
        / n;
    let cmc = cmc_from_ranks(&used, protocol.cmc_max_rank);

    let acc = |p: Option<LabelPair>| p.map(|l| attribute_accuracy(l.predicted, l.truth)).transpose();
    let variability_ratio = if extras.variability_ratio {
        let feats = ndarray::concatenate(ndarray::Axis(0), &[query.features, gallery.features])
            .map_err(|e| Error::shape(e.to_string()))?;
        let ids: Vec<u32> = query.meta.iter().chain(gallery.meta).map(|m| m.identity).collect();
        Some(intra_inter_ratio(feats.view(), &ids)?)
    } else {
        None
    };

    Ok(EvalReport {
        map,
        rank_k_map,
        rank_k: protocol.rank_k_map_k,
        cmc,
        color_accuracy: acc(extras.color)?,
        type_accuracy: acc(extras.vtype)?,
        variability_ratio,
        n_queries_used: used.len(),
        n_queries_skipped: n_total - used.len(),
    })
}

/// The first `k` valid gallery entries for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMatches {
    pub query: usize,
    pub gallery: Vec<usize>,
    pub distances: Vec<f64>,
    pub is_match: Vec<bool>,
}

/// Top-`k` ranked matches per query with junk entries removed.
pub fn top_matches(
    query: EvalSide,
    gallery: EvalSide,
    protocol: &EvalProtocol,
    k: usize,
) -> Result<Vec<QueryMatches>> {
    protocol.validate()?;
    check_side("query", &query)?;
    check_side("gallery", &gallery)?;
    check_pair(&query.features, &gallery.features)?;
    let gstd = gallery.features.as_standard_layout();
    let grows = row_slices(&gstd);
    let qstd = query.features.as_standard_layout();
    let qrows = row_slices(&qstd);
    Ok(qrows
        .par_iter()
        .zip(query.meta.par_iter())
        .enumerate()
        .map(|(qi, (q, &qm))| {
            let dists: Vec<f64> = grows.iter().map(|g| euclidean(q, g)).collect();
            let mut valid: Vec<usize> = (0..grows.len())
                .filter(|&j| {
                    let gm = gallery.meta[j];
                    !(protocol.exclude_same_camera_same_id
                        && gm.identity == qm.identity
                        && gm.camera == qm.camera)
                })
                .collect();
            let key = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
            if valid.len() > k && k > 0 {
                valid.select_nth_unstable_by(k - 1, key);
            }
            valid.truncate(k);
            valid.sort_by(key);
            QueryMatches {
                query: qi,
                distances: valid.iter().map(|&j| dists[j]).collect(),
                is_match: valid.iter().map(|&j| gallery.meta[j].identity == qm.identity).collect(),
                gallery: valid,
            }
        })
        .collect())
}
