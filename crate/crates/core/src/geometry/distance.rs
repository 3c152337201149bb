use rayon::prelude::*;

use super::PointCloud;
use crate::error::{CoreError, Result};

/// Exact minimum Euclidean distance from every query point to the reference
/// cloud. Brute force; per-query results are order-independent so the
/// parallel fan-out stays deterministic.
pub fn nearest_distances(query: &PointCloud, reference: &PointCloud) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(CoreError::EmptyReference);
    }
    Ok(query
        .points
        .par_iter()
        .map(|q| {
            reference
                .points
                .iter()
                .map(|r| (q - r).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}
