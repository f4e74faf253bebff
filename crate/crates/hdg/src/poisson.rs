//! Synthetic datasets: a homogeneous spatial Poisson process conditioned on
//! its total count, which over a hypercube is exactly n i.i.d. uniform
//! points.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::delaunay::MAX_DIM;
use crate::error::{HdgError, Result};

/// Draws n uniform points in the hypercube `[0, side)^dim`, seeded.
pub fn gen_poisson(n: usize, dim: usize, side: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(HdgError::invalid("need at least one point"));
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(HdgError::UnsupportedDimension { dim, max: MAX_DIM });
    }
    if !(side > 0.0) || !side.is_finite() {
        return Err(HdgError::invalid("region side length must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * dim).map(|_| rng.random_range(0.0..side)).collect();
    Dataset::from_flat(dim, coords)
}
