use ndarray::{Array2, ArrayView2, CowArray, Ix2};
use rayon::prelude::*;

use crate::error::{Error, Result};

const LANES: usize = 8;
/// Gallery rows visited together so a block stays cache resident.
const GALLERY_BLOCK: usize = 128;

/// Squared Euclidean distance with a fixed 8-lane accumulation order.
///
/// The summation order depends only on the vector length, so a cell has the
/// same bits no matter how the surrounding matrix is tiled or scheduled.
#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        acc[l] += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).max(0.0).sqrt()
}

pub(crate) fn check_pair(query: &ArrayView2<f64>, gallery: &ArrayView2<f64>) -> Result<()> {
    if query.ncols() != gallery.ncols() {
        return Err(Error::shape(format!(
            "query dim {} vs gallery dim {}",
            query.ncols(),
            gallery.ncols()
        )));
    }
    for (name, m) in [("query", query), ("gallery", gallery)] {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{name} features"),
            });
        }
    }
    Ok(())
}

/// Borrowed rows of a standard-layout matrix.
pub(crate) fn row_slices<'a>(m: &'a CowArray<'a, f64, Ix2>) -> Vec<&'a [f64]> {
    let d = m.ncols();
    let flat = m.as_slice().expect("standard layout");
    if d == 0 {
        return vec![&flat[..0]; m.nrows()];
    }
    flat.chunks_exact(d).collect()
}

/// Fills `out` (row-major `queries.len() x gallery.len()`) with distances,
/// walking the gallery in cache-sized blocks.
pub(crate) fn distance_tile(queries: &[&[f64]], gallery: &[&[f64]], out: &mut [f64]) {
    let g = gallery.len();
    debug_assert_eq!(out.len(), queries.len() * g);
    for start in (0..g).step_by(GALLERY_BLOCK) {
        let end = (start + GALLERY_BLOCK).min(g);
        for (qi, q) in queries.iter().enumerate() {
            let row = &mut out[qi * g..(qi + 1) * g];
            for j in start..end {
                row[j] = euclidean(q, gallery[j]);
            }
        }
    }
}

/// Exact `q x g` Euclidean distance matrix, computed in parallel over tiles
/// of `tile_rows` query rows. The result is bitwise identical for every tile
/// size and thread count.
pub fn distance_matrix(
    query: ArrayView2<f64>,
    gallery: ArrayView2<f64>,
    tile_rows: usize,
) -> Result<Array2<f64>> {
    check_pair(&query, &gallery)?;
    let tile_rows = tile_rows.max(1);
    let (q, g) = (query.nrows(), gallery.nrows());
    let (qstd, gstd) = (query.as_standard_layout(), gallery.as_standard_layout());
    let qrefs = row_slices(&qstd);
    let grefs = row_slices(&gstd);
    let mut out = vec![0.0; q * g];
    if g > 0 {
        out.par_chunks_mut(tile_rows * g)
            .zip(qrefs.par_chunks(tile_rows))
            .for_each(|(block, qs)| distance_tile(qs, &grefs, block));
    }
    Ok(Array2::from_shape_vec((q, g), out).expect("shape matches buffer"))
}

/// Single-threaded, untiled reference with the same per-cell arithmetic.
pub fn distance_matrix_serial(query: ArrayView2<f64>, gallery: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_pair(&query, &gallery)?;
    let mut out = Array2::zeros((query.nrows(), gallery.nrows()));
    for (i, qr) in query.outer_iter().enumerate() {
        let qv = qr.to_vec();
        for (j, gr) in gallery.outer_iter().enumerate() {
            out[[i, j]] = euclidean(&qv, &gr.to_vec());
        }
    }
    Ok(out)
}
