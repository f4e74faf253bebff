//! Brute-force reference procedures: exact k-nearest-neighbors, the exact
//! minimum enclosing sphere, and the exact scanning decision procedure for
//! the (c,r)-kNN problem.
//!
//! Everything here is linear (or worse) in the number of points and exists
//! as ground truth: the index, the approximate enclosing sphere and the LSH
//! backend are all tested against these. The (c,r)-kNN scan doubles as the
//! production exact backend, and `exact_knn` is what the benchmark harness
//! uses to score recall.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{dist, dist_sq, Dataset, PointId};
use crate::error::{HdgError, Result};
use crate::sphere::Sphere;

/// Result of an exact k-nearest-neighbor scan.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    /// The k nearest ids, sorted by non-decreasing distance, ties by id.
    pub ids: Vec<PointId>,
    /// Distance of the k-th nearest point (the largest distance in `ids`).
    pub kth_distance: f64,
}

/// Exact kNN by full scan. Ties are broken by smaller id so results are
/// reproducible.
pub fn exact_knn(ds: &Dataset, q: &[f64], k: usize) -> Result<KnnResult> {
    if q.len() != ds.dim() {
        return Err(HdgError::invalid("query dimension mismatch"));
    }
    if k == 0 || k > ds.len() {
        return Err(HdgError::invalid(format!(
            "k = {k} out of range 1..={}",
            ds.len()
        )));
    }
    let mut order: Vec<(f64, PointId)> = ds
        .iter_points()
        .map(|p| (dist(q, p.coords), p.id))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    Ok(KnnResult {
        kth_distance: order[k - 1].0,
        ids: order.into_iter().map(|(_, id)| id).collect(),
    })
}

/// Exact decision procedure for the (c,r)-kNN problem.
///
/// Returns `Some(ids)` with exactly k ids, all within the closed ball of
/// radius c*r around q, whenever at least k points lie in that ball; the k
/// returned are the nearest ones (ties by id). Returns `None` otherwise.
/// `None` therefore certifies that fewer than k points lie within r as well,
/// since the r-ball is contained in the c*r-ball.
pub fn exact_crknn(
    ds: &Dataset,
    q: &[f64],
    k: usize,
    c: f64,
    r: f64,
) -> Result<Option<Vec<PointId>>> {
    if q.len() != ds.dim() {
        return Err(HdgError::invalid("query dimension mismatch"));
    }
    if k == 0 {
        return Err(HdgError::invalid("k must be positive"));
    }
    if !(c > 1.0) {
        return Err(HdgError::invalid("approximation factor c must exceed 1"));
    }
    if !(r >= 0.0) {
        return Err(HdgError::invalid("radius must be non-negative"));
    }
    let outer = c * r;
    let mut inside: Vec<(f64, PointId)> = ds
        .iter_points()
        .filter_map(|p| {
            let d = dist(q, p.coords);
            (d <= outer).then_some((d, p.id))
        })
        .collect();
    if inside.len() < k {
        return Ok(None);
    }
    inside.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    inside.truncate(k);
    Ok(Some(inside.into_iter().map(|(_, id)| id).collect()))
}

/// Exact minimum enclosing sphere (Welzl's move-to-front algorithm,
/// generalized to d dimensions). Reference oracle; intended for small sets.
pub fn exact_mes(ds: &Dataset) -> Result<Sphere> {
    let ids: Vec<PointId> = (0..ds.len() as PointId).collect();
    exact_mes_subset(ds, &ids)
}

/// Exact minimum enclosing sphere of a subset of points.
pub fn exact_mes_subset(ds: &Dataset, ids: &[PointId]) -> Result<Sphere> {
    if ids.is_empty() {
        return Err(HdgError::invalid("minimum enclosing sphere of empty set"));
    }
    let dim = ds.dim();
    let mut shuffled: Vec<&[f64]> = ids.iter().map(|&id| ds.point(id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x004d_4553);
    shuffled.shuffle(&mut rng);

    let mut boundary: Vec<&[f64]> = Vec::with_capacity(dim + 1);
    let sphere = welzl(&shuffled, &mut boundary, dim)
        .ok_or_else(|| HdgError::Internal("degenerate support set in enclosing sphere".into()))?;

    // Snap the radius to the exact maximum distance from the solved center so
    // the enclosing property holds without tolerance.
    let radius = ids
        .iter()
        .map(|&id| dist_sq(&sphere.center, ds.point(id)))
        .fold(0.0_f64, f64::max)
        .sqrt();
    Ok(Sphere::new(sphere.center, radius))
}

fn welzl<'a>(points: &[&'a [f64]], boundary: &mut Vec<&'a [f64]>, dim: usize) -> Option<Sphere> {
    if points.is_empty() || boundary.len() == dim + 1 {
        return sphere_through(boundary, dim);
    }
    let p = points[0];
    let rest = &points[1..];
    if let Some(s) = welzl(rest, boundary, dim) {
        if dist_sq(&s.center, p) <= s.radius * s.radius * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Some(s);
        }
    }
    boundary.push(p);
    let s = welzl(rest, boundary, dim);
    boundary.pop();
    s
}

/// Smallest sphere passing through all boundary points: the circumsphere
/// whose center lies in their affine hull. Returns `None` for an empty or
/// affinely dependent boundary.
fn sphere_through(boundary: &[&[f64]], dim: usize) -> Option<Sphere> {
    match boundary.len() {
        0 => None,
        1 => Some(Sphere::new(boundary[0].to_vec(), 0.0)),
        m => {
            let base = boundary[0];
            // Solve the Gram system for the affine coefficients of the center.
            let k = m - 1;
            let mut gram = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let vi: Vec<f64> = boundary[i + 1]
                    .iter()
                    .zip(base)
                    .map(|(a, b)| a - b)
                    .collect();
                for j in 0..k {
                    let vj = boundary[j + 1];
                    let dot: f64 = vi
                        .iter()
                        .zip(vj.iter().zip(base))
                        .map(|(a, (b, c))| a * (b - c))
                        .sum();
                    gram[i * k + j] = 2.0 * dot;
                }
                rhs[i] = vi.iter().map(|x| x * x).sum();
            }
            let coeffs = solve_linear(&mut gram, &mut rhs, k)?;
            let mut center = base.to_vec();
            for (j, &lambda) in coeffs.iter().enumerate() {
                for d in 0..dim {
                    center[d] += lambda * (boundary[j + 1][d] - base[d]);
                }
            }
            let radius = dist(&center, base);
            Some(Sphere::new(center, radius))
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when near-singular.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let scale: f64 = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].abs()).fold(0.0, f64::max))
        .fold(1.0, f64::max);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}
