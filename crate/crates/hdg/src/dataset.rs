//! Point sets: storage, the Euclidean metric, coordinate jitter and the
//! text interchange format.
//!
//! Points are d-dimensional `f64` vectors with implicit 0-based ids. All
//! structures are immutable after construction and safe to share across
//! threads.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HdgError, Result};

/// Stable identifier of a point within its [`Dataset`] (0-based).
pub type PointId = u32;

/// Borrowed view of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRef<'a> {
    pub id: PointId,
    pub coords: &'a [f64],
}

/// An immutable set of n distinct d-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    coords: Vec<f64>,
    jitter_seed: Option<u64>,
}

impl Dataset {
    /// Builds a dataset from flattened row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(HdgError::invalid("dimension must be at least 1"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(HdgError::invalid(format!(
                "coordinate count {} is not a positive multiple of dim {}",
                coords.len(),
                dim
            )));
        }
        if let Some(bad) = coords.iter().find(|v| !v.is_finite()) {
            return Err(HdgError::invalid(format!("non-finite coordinate {bad}")));
        }
        if coords.len() / dim > u32::MAX as usize {
            return Err(HdgError::invalid("too many points for 32-bit ids"));
        }
        Ok(Dataset {
            dim,
            coords,
            jitter_seed: None,
        })
    }

    /// Builds a dataset from one row per point.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(HdgError::invalid(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            flat.extend_from_slice(row);
        }
        Self::from_flat(dim, flat)
    }

    pub(crate) fn from_flat_jittered(dim: usize, coords: Vec<f64>, seed: u64) -> Result<Self> {
        let mut ds = Self::from_flat(dim, coords)?;
        ds.jitter_seed = Some(seed);
        Ok(ds)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn jitter_seed(&self) -> Option<u64> {
        self.jitter_seed
    }

    pub fn point(&self, id: PointId) -> &[f64] {
        let i = id as usize * self.dim;
        &self.coords[i..i + self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = PointRef<'_>> {
        self.coords
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, coords)| PointRef {
                id: i as PointId,
                coords,
            })
    }

    pub fn flat_coords(&self) -> &[f64] {
        &self.coords
    }

    /// Per-dimension (min, max) over all points.
    pub fn bounding_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for p in self.coords.chunks_exact(self.dim) {
            for (i, &x) in p.iter().enumerate() {
                iv[i].0 = iv[i].0.min(x);
                iv[i].1 = iv[i].1.max(x);
            }
        }
        iv
    }

    /// Diagonal length of the bounding box.
    pub fn bounding_diameter(&self) -> f64 {
        self.bounding_intervals()
            .iter()
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Returns a copy with a seeded uniform perturbation in `[-eta, eta]`
    /// added to every coordinate, where `eta` is 1e-9 times the bounding-box
    /// diameter. The perturbation breaks coordinate ties so that no two
    /// points share a coordinate in any dimension; the method retries with a
    /// fresh stream in the astronomically unlikely event a tie survives.
    pub fn with_jitter(&self, seed: u64) -> Result<Dataset> {
        if self.jitter_seed.is_some() {
            return Err(HdgError::invalid("dataset is already jittered"));
        }
        let diameter = self.bounding_diameter();
        let eta = if diameter > 0.0 { 1e-9 * diameter } else { 1e-9 };
        for attempt in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(attempt);
            let coords: Vec<f64> = self
                .coords
                .iter()
                .map(|&x| x + rng.random_range(-eta..=eta))
                .collect();
            let ds = Dataset {
                dim: self.dim,
                coords,
                jitter_seed: Some(seed),
            };
            if ds.coordinates_distinct() {
                return Ok(ds);
            }
        }
        Err(HdgError::Internal(
            "jitter failed to separate coordinates after 8 attempts".into(),
        ))
    }

    /// True when no two points share a coordinate value in any dimension.
    pub fn coordinates_distinct(&self) -> bool {
        let n = self.len();
        let mut column = Vec::with_capacity(n);
        for d in 0..self.dim {
            column.clear();
            column.extend((0..n).map(|i| self.coords[i * self.dim + d]));
            column.sort_unstable_by(f64::total_cmp);
            if column.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
        }
        true
    }

    /// Serializes to the text interchange format: a `"d n"` header line
    /// followed by n lines of d space-separated decimals. Floats are written
    /// in shortest round-trip form, so write/read is lossless.
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{} {}", self.dim, self.len()).expect("string write");
        for p in self.coords.chunks_exact(self.dim) {
            for (i, x) in p.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{x:?}").expect("string write");
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Parses the text interchange format. Ids are assigned in line order.
    pub fn read_text(r: impl Read) -> Result<Dataset> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| HdgError::invalid("empty dataset file"))??;
        let mut it = header.split_whitespace();
        let dim: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| HdgError::invalid("header must be \"d n\""))?;
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| HdgError::invalid("header must be \"d n\""))?;
        if it.next().is_some() {
            return Err(HdgError::invalid("header must be \"d n\""));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = coords.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    HdgError::invalid(format!("line {}: bad number {tok:?}", lineno + 2))
                })?;
                coords.push(v);
            }
            if coords.len() - before != dim {
                return Err(HdgError::invalid(format!(
                    "line {}: expected {dim} coordinates, found {}",
                    lineno + 2,
                    coords.len() - before
                )));
            }
        }
        if coords.len() != n * dim {
            return Err(HdgError::invalid(format!(
                "expected {n} points, found {}",
                coords.len() / dim.max(1)
            )));
        }
        Self::from_flat(dim, coords)
    }
}

/// Euclidean distance between two points of the same dimension.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HdgError::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dist(a, b))
}

/// Euclidean distance; dimensions must already match.
#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Squared Euclidean distance. Square roots are deferred wherever only the
/// ordering matters; `sqrt` is monotone so comparisons agree exactly.
#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Splitmix64 step; used to derive independent sub-seeds from one base seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut x = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn distance_identity() {
        assert_eq!(distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn distance_3_4_5() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn distance_cube_diagonal() {
        let d = distance(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((d - 3.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_dimension_mismatch() {
        assert!(matches!(
            distance(&[0.0], &[0.0, 1.0]),
            Err(HdgError::InvalidArgument(_))
        ));
    }

    #[test]
    fn triangle_inequality_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let d = rng.random_range(1..=6);
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let r: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let pq = dist(&p, &q);
            let qr = dist(&q, &r);
            let pr = dist(&p, &r);
            assert!(pr <= (pq + qr) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn symmetry_and_zero_iff_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let d = rng.random_range(1..=5);
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(dist(&p, &q), dist(&q, &p));
        }
        assert_eq!(dist(&[1.5, 2.5], &[1.5, 2.5]), 0.0);
    }

    #[test]
    fn jitter_separates_duplicate_coordinates() {
        let ds = Dataset::from_rows(2, &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(!ds.coordinates_distinct());
        let j = ds.with_jitter(42).unwrap();
        assert!(j.coordinates_distinct());
        assert_eq!(j.jitter_seed(), Some(42));
        // Perturbation is tiny relative to the bounding box.
        for (a, b) in ds.flat_coords().iter().zip(j.flat_coords()) {
            assert!((a - b).abs() <= 1e-9 * ds.bounding_diameter());
        }
        // Same seed, same result.
        let j2 = ds.with_jitter(42).unwrap();
        assert_eq!(j, j2);
        // Double jitter is rejected.
        assert!(j.with_jitter(1).is_err());
    }

    #[test]
    fn jitter_of_degenerate_cloud_uses_absolute_floor() {
        let ds = Dataset::from_rows(2, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let j = ds.with_jitter(5).unwrap();
        assert!(j.coordinates_distinct());
    }

    #[test]
    fn text_roundtrip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..17)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let ds = Dataset::from_rows(3, &rows).unwrap();
        let mut buf = Vec::new();
        ds.write_text(&mut buf).unwrap();
        let back = Dataset::read_text(buf.as_slice()).unwrap();
        assert_eq!(ds.flat_coords(), back.flat_coords());
        assert_eq!(ds.dim(), back.dim());
    }

    #[test]
    fn text_rejects_malformed_input() {
        assert!(Dataset::read_text("".as_bytes()).is_err());
        assert!(Dataset::read_text("2 1\n1.0\n".as_bytes()).is_err());
        assert!(Dataset::read_text("2 2\n1.0 2.0\n".as_bytes()).is_err());
        assert!(Dataset::read_text("2 1\n1.0 x\n".as_bytes()).is_err());
    }

    #[test]
    fn from_flat_rejects_bad_shapes() {
        assert!(Dataset::from_flat(0, vec![1.0]).is_err());
        assert!(Dataset::from_flat(2, vec![]).is_err());
        assert!(Dataset::from_flat(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Dataset::from_flat(1, vec![f64::NAN]).is_err());
    }
}
