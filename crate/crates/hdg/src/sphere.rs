use crate::dataset::dist;

/// A d-dimensional closed ball: center plus non-negative radius. The
/// boundary counts as inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        debug_assert!(radius >= 0.0);
        Sphere { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-ball membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        dist(&self.center, p) <= self.radius
    }

    /// Membership with a relative slack, for checks on recomputed values.
    pub fn contains_with_slack(&self, p: &[f64], rel: f64) -> bool {
        dist(&self.center, p) <= self.radius * (1.0 + rel) + f64::MIN_POSITIVE
    }
}
