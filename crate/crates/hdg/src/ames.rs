//! Approximate minimum enclosing spheres.
//!
//! Iterative center refinement: walk the center toward the current farthest
//! point with a 1/i step for ceil(1/epsilon^2) rounds, then take the radius
//! as the exact maximum distance from the final center. The result encloses
//! every point by construction and its radius is within (1+epsilon) of
//! optimal.

use crate::dataset::{dist_sq, Dataset, PointId};
use crate::error::{HdgError, Result};
use crate::sphere::Sphere;

/// Default approximation factor used for index construction.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmesParams {
    pub epsilon: f64,
}

impl Default for AmesParams {
    fn default() -> Self {
        AmesParams {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AmesParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(HdgError::invalid(format!(
                "epsilon must lie in (0,1), got {epsilon}"
            )));
        }
        Ok(AmesParams { epsilon })
    }

    /// Number of refinement rounds, ceil(1/epsilon^2).
    pub fn iterations(&self) -> usize {
        (1.0 / (self.epsilon * self.epsilon)).ceil() as usize
    }
}

/// Approximate minimum enclosing sphere of a subset of dataset points.
///
/// Deterministic: the start center is the point with the smallest id, and
/// farthest-point ties go to the smaller id.
pub fn ames(ds: &Dataset, ids: &[PointId], epsilon: f64) -> Result<Sphere> {
    let params = AmesParams::new(epsilon)?;
    if ids.is_empty() {
        return Err(HdgError::invalid(
            "approximate enclosing sphere of empty set",
        ));
    }
    let start = *ids.iter().min().expect("non-empty");
    let mut center: Vec<f64> = ds.point(start).to_vec();
    if ids.len() > 1 {
        for i in 1..=params.iterations() {
            let far = farthest(ds, ids, &center);
            let step = 1.0 / i as f64;
            let p = ds.point(far);
            for (c, &x) in center.iter_mut().zip(p) {
                *c += step * (x - *c);
            }
        }
    }
    let radius = ids
        .iter()
        .map(|&id| dist_sq(&center, ds.point(id)))
        .fold(0.0_f64, f64::max)
        .sqrt();
    Ok(Sphere::new(center, radius))
}

fn farthest(ds: &Dataset, ids: &[PointId], center: &[f64]) -> PointId {
    let mut best = (f64::NEG_INFINITY, PointId::MAX);
    for &id in ids {
        let d = dist_sq(center, ds.point(id));
        if d > best.0 || (d == best.0 && id < best.1) {
            best = (d, id);
        }
    }
    best.1
}
