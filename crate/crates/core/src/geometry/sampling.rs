use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, TriMesh};
use crate::error::{CoreError, Result};

/// Area-weighted barycentric surface sampling. Deterministic given `seed`.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.faces.is_empty() {
        return Err(CoreError::DegenerateMesh);
    }
    if n == 0 {
        return Err(CoreError::InvalidArgument("n must be >= 1".into()));
    }
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(CoreError::DegenerateMesh);
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen_range(0.0..total);
        let face = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [ia, ib, ic] = mesh.faces[face];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        let mut u: f64 = rng.gen();
        let mut v: f64 = rng.gen();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
    }
    PointCloud::new(points)
}

/// Greedy farthest point sampling. The first index is drawn uniformly from
/// `seed`; each later pick maximizes the minimum distance to the chosen set,
/// ties broken by lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(CoreError::InvalidArgument(format!(
            "k = {k} out of range for {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);
    let mut chosen = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let push = |idx: usize, chosen: &mut Vec<usize>, min_d2: &mut Vec<f64>| {
        chosen.push(idx);
        let p = cloud.points[idx];
        for (i, d2) in min_d2.iter_mut().enumerate() {
            let cand = (cloud.points[i] - p).norm_squared();
            if cand < *d2 {
                *d2 = cand;
            }
        }
    };
    push(first, &mut chosen, &mut min_d2);
    while chosen.len() < k {
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for i in 0..n {
            if min_d2[i] > best_d2 && min_d2[i] > 0.0 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        if best == usize::MAX {
            // All remaining points coincide with chosen ones; take lowest
            // unchosen index.
            best = (0..n).find(|i| !chosen.contains(i)).unwrap();
        }
        push(best, &mut chosen, &mut min_d2);
    }
    Ok(chosen)
}
