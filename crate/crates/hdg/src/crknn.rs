//! Backends for the (c,r)-kNN decision problem.
//!
//! A backend answers: given q, k, c > 1 and a radius r, either k point ids
//! all within c*r of q, or Empty. Empty from the exact backend certifies
//! that fewer than k points lie within c*r (hence fewer than k within r);
//! Empty from the LSH backend carries the same meaning only with constant
//! probability. Both backends share the hard guarantee that no returned
//! point ever lies outside c*r.
//!
//! The LSH backend hashes with quantized 2-stable (Gaussian) projections:
//! m functions concatenated per table, l tables, with
//! m = ceil(log_{1/p2} n), l = ceil(k * n^rho), rho = ln(1/p1)/ln(1/p2),
//! where p1 and p2 are the single-projection collision probabilities at
//! distances r and c*r. A query scans the l buckets it hashes to and gives
//! up after examining 3l distinct candidates. Radii are provisioned as a
//! geometric ladder with ratio c (one table set per rung, built lazily and
//! memoized) and a requested radius rounds up to the next rung.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{derive_seed, dist, Dataset, PointId};
use crate::error::{HdgError, Result};
use crate::exact::exact_crknn;

/// Reply from one backend invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendAnswer {
    /// `Some` holds exactly k ids within c * effective_radius; `None` is Empty.
    pub ids: Option<Vec<PointId>>,
    /// Distinct candidate points whose distance was computed.
    pub candidates_scanned: u64,
    /// The radius actually used (the LSH backend rounds up to its ladder).
    pub effective_radius: f64,
}

/// The (c,r)-kNN oracle contract shared by the exact and LSH backends.
pub trait CrKnnBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn answer(&self, q: &[f64], k: usize, c: f64, r: f64) -> Result<BackendAnswer>;
}

/// Reference backend: one linear scan, exact decisions.
pub struct ExactBackend<'a> {
    dataset: &'a Dataset,
}

impl<'a> ExactBackend<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        ExactBackend { dataset }
    }
}

impl CrKnnBackend for ExactBackend<'_> {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn answer(&self, q: &[f64], k: usize, c: f64, r: f64) -> Result<BackendAnswer> {
        let ids = exact_crknn(self.dataset, q, k, c, r)?;
        Ok(BackendAnswer {
            ids,
            candidates_scanned: self.dataset.len() as u64,
            effective_radius: r,
        })
    }
}

/// Probability that two points at distance `s` fall into the same bucket of
/// one quantized Gaussian projection with bucket width `w`, computed by
/// Simpson integration of the 2-stable collision density. Monotone
/// decreasing in `s/w`, equal to 1 at `s = 0`.
pub fn collision_probability(w: f64, s: f64) -> f64 {
    assert!(w > 0.0, "bucket width must be positive");
    assert!(s >= 0.0, "distance must be non-negative");
    if s == 0.0 {
        return 1.0;
    }
    // Integrand support is effectively [0, 12s]; resolve the Gaussian even
    // when s << w.
    let upper = w.min(12.0 * s);
    let steps = 4096usize; // even
    let h = upper / steps as f64;
    let norm = 2.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    let f = |t: f64| norm * (-t * t / (2.0 * s * s)).exp() * (1.0 - t / w);
    let mut acc = f(0.0) + f(upper);
    for i in 1..steps {
        let t = i as f64 * h;
        acc += f(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (acc * h / 3.0).clamp(0.0, 1.0)
}

/// Table-count and collision parameters for one radius level.
#[derive(Debug, Clone, PartialEq)]
pub struct LshParams {
    /// Bucket width of each quantized projection.
    pub w: f64,
    /// Concatenation length (functions per composite hash).
    pub m: usize,
    /// Number of tables.
    pub l: usize,
    pub rho: f64,
    pub p1: f64,
    pub p2: f64,
    pub seed: u64,
}

/// Derives the level parameters from the collision probabilities at r and
/// c*r.
pub fn derive_params(
    n: usize,
    k: usize,
    c: f64,
    r: f64,
    w: f64,
    seed: u64,
) -> Result<LshParams> {
    if n < 2 {
        return Err(HdgError::invalid("parameter derivation needs n >= 2"));
    }
    if k == 0 {
        return Err(HdgError::invalid("k must be positive"));
    }
    if !(c > 1.0) {
        return Err(HdgError::invalid("approximation factor c must exceed 1"));
    }
    if !(r > 0.0) || !(w > 0.0) {
        return Err(HdgError::invalid("radius and bucket width must be positive"));
    }
    let p1 = collision_probability(w, r);
    let p2 = collision_probability(w, c * r);
    if p2 >= p1 || p1 >= 1.0 || p2 <= 0.0 {
        return Err(HdgError::Internal(format!(
            "collision probabilities out of order: p1 = {p1}, p2 = {p2}"
        )));
    }
    let rho = (1.0 / p1).ln() / (1.0 / p2).ln();
    let m = ((n as f64).ln() / (1.0 / p2).ln()).ceil() as usize;
    let l = (k as f64 * (n as f64).powf(rho)).ceil() as usize;
    Ok(LshParams {
        w,
        m: m.max(1),
        l: l.max(1),
        rho,
        p1,
        p2,
        seed,
    })
}

/// Tuning knobs for the LSH backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshConfig {
    /// Bucket width as a multiple of the level radius.
    pub w_factor: f64,
    pub seed: u64,
    /// Cap on the total number of tables across all built levels.
    pub max_tables: usize,
}

impl Default for LshConfig {
    fn default() -> Self {
        LshConfig {
            w_factor: 4.0,
            seed: 0,
            max_tables: 8192,
        }
    }
}

struct LshLevel {
    radius: f64,
    params: LshParams,
    /// l * m * dim Gaussian projection coefficients.
    projections: Vec<f64>,
    /// l * m uniform offsets in [0, w).
    offsets: Vec<f64>,
    /// Per table: (composite key, point id), sorted.
    tables: Vec<Vec<(u64, PointId)>>,
}

impl LshLevel {
    fn build(dataset: &Dataset, params: LshParams, radius: f64) -> LshLevel {
        let dim = dataset.dim();
        let w = params.w;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let projections: Vec<f64> = (0..params.l * params.m * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let offsets: Vec<f64> = (0..params.l * params.m)
            .map(|_| rng.random_range(0.0..w))
            .collect();
        let level = LshLevel {
            radius,
            params,
            projections,
            offsets,
            tables: Vec::new(),
        };
        let mut tables = Vec::with_capacity(level.params.l);
        for j in 0..level.params.l {
            let mut entries: Vec<(u64, PointId)> = dataset
                .iter_points()
                .map(|p| (level.key(dim, j, p.coords), p.id))
                .collect();
            entries.sort_unstable();
            tables.push(entries);
        }
        LshLevel { tables, ..level }
    }

    /// Composite key of point `p` in table `j`: the m quantized projections
    /// folded into one 64-bit hash.
    fn key(&self, dim: usize, j: usize, p: &[f64]) -> u64 {
        let m = self.params.m;
        let w = self.params.w;
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for i in 0..m {
            let base = (j * m + i) * dim;
            let proj = &self.projections[base..base + dim];
            let mut dot = self.offsets[j * m + i];
            for (a, b) in proj.iter().zip(p) {
                dot += a * b;
            }
            let slot = (dot / w).floor() as i64;
            h = (h ^ slot as u64).wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    fn bucket(&self, j: usize, key: u64) -> &[(u64, PointId)] {
        let table = &self.tables[j];
        let lo = table.partition_point(|&(k, _)| k < key);
        let hi = table.partition_point(|&(k, _)| k <= key);
        &table[lo..hi]
    }
}

struct LevelStore {
    levels: HashMap<u32, Arc<LshLevel>>,
    total_tables: usize,
}

/// Multi-level LSH backend over a fixed dataset and fixed (k, c).
pub struct LshBackend<'a> {
    dataset: &'a Dataset,
    k: usize,
    c: f64,
    base_radius: f64,
    cfg: LshConfig,
    store: RwLock<LevelStore>,
}

impl<'a> LshBackend<'a> {
    /// Lazily provisioned ladder starting at `base_radius` (level t serves
    /// radius base_radius * c^t). Levels are built on first use, exactly
    /// once, and memoized.
    pub fn new(dataset: &'a Dataset, k: usize, c: f64, base_radius: f64, cfg: LshConfig) -> Result<Self> {
        if k == 0 || k > dataset.len() {
            return Err(HdgError::invalid(format!(
                "k = {k} out of range 1..={}",
                dataset.len()
            )));
        }
        if !(c > 1.0) {
            return Err(HdgError::invalid("approximation factor c must exceed 1"));
        }
        if !(base_radius.is_finite()) || base_radius < 0.0 {
            return Err(HdgError::invalid("base radius must be non-negative"));
        }
        Ok(LshBackend {
            dataset,
            k,
            c,
            // A degenerate (single-point or zero-extent) dataset gives a zero
            // base; keep the ladder well-defined.
            base_radius: if base_radius > 0.0 { base_radius } else { 1e-9 },
            cfg,
            store: RwLock::new(LevelStore {
                levels: HashMap::new(),
                total_tables: 0,
            }),
        })
    }

    /// Eagerly builds one level per given radius. The radii must be strictly
    /// increasing and geometric with ratio c.
    pub fn provision(
        dataset: &'a Dataset,
        k: usize,
        c: f64,
        radii: &[f64],
        cfg: LshConfig,
    ) -> Result<Self> {
        if radii.is_empty() || !(radii[0] > 0.0) {
            return Err(HdgError::invalid("need at least one positive radius level"));
        }
        for pair in radii.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(HdgError::invalid("radius levels must be strictly increasing"));
            }
            let ratio = pair[1] / pair[0];
            if (ratio - c).abs() > 1e-9 * c {
                return Err(HdgError::invalid(format!(
                    "radius levels must be geometric with ratio {c}, found {ratio}"
                )));
            }
        }
        let backend = Self::new(dataset, k, c, radii[0], cfg)?;
        for (t, _) in radii.iter().enumerate() {
            backend.get_or_build(t as u32)?;
        }
        Ok(backend)
    }

    pub fn level_radius(&self, t: u32) -> f64 {
        self.base_radius * self.c.powi(t as i32)
    }

    /// Smallest ladder level whose radius is at least `r`.
    pub fn level_for(&self, r: f64) -> u32 {
        if r <= self.base_radius {
            return 0;
        }
        let x = (r / self.base_radius).ln() / self.c.ln();
        let t = (x - 1e-9).ceil();
        if t < 0.0 {
            0
        } else {
            t as u32
        }
    }

    /// Parameters of the levels built so far, by level index.
    pub fn built_levels(&self) -> Vec<(u32, LshParams)> {
        let store = self.store.read().expect("lock");
        let mut out: Vec<(u32, LshParams)> = store
            .levels
            .iter()
            .map(|(&t, level)| (t, level.params.clone()))
            .collect();
        out.sort_by_key(|&(t, _)| t);
        out
    }

    fn get_or_build(&self, t: u32) -> Result<Arc<LshLevel>> {
        if let Some(level) = self.store.read().expect("lock").levels.get(&t) {
            return Ok(level.clone());
        }
        let mut store = self.store.write().expect("lock");
        if let Some(level) = store.levels.get(&t) {
            return Ok(level.clone());
        }
        let radius = self.level_radius(t);
        let seed = derive_seed(self.cfg.seed, t as u64);
        let params = derive_params(
            self.dataset.len(),
            self.k,
            self.c,
            radius,
            self.cfg.w_factor * radius,
            seed,
        )?;
        if store.total_tables + params.l > self.cfg.max_tables {
            return Err(HdgError::ResourceLimit(format!(
                "building level {t} would need {} tables on top of {}, cap is {}",
                params.l, store.total_tables, self.cfg.max_tables
            )));
        }
        let level = Arc::new(LshLevel::build(self.dataset, params, radius));
        store.total_tables += level.params.l;
        store.levels.insert(t, level.clone());
        Ok(level)
    }
}

impl CrKnnBackend for LshBackend<'_> {
    fn name(&self) -> &'static str {
        "lsh"
    }

    fn answer(&self, q: &[f64], k: usize, c: f64, r: f64) -> Result<BackendAnswer> {
        if q.len() != self.dataset.dim() {
            return Err(HdgError::invalid("query dimension mismatch"));
        }
        if k != self.k || c != self.c {
            return Err(HdgError::invalid(
                "backend was provisioned for different (k, c)",
            ));
        }
        // Hashing needs n >= 2 for the parameter formulas; scan directly
        // below that.
        if self.dataset.len() < 2 {
            let ids = exact_crknn(self.dataset, q, k, c, r)?;
            return Ok(BackendAnswer {
                ids,
                candidates_scanned: self.dataset.len() as u64,
                effective_radius: r,
            });
        }

        let t = self.level_for(r);
        let level = self.get_or_build(t)?;
        let effective = level.radius;
        let outer = c * effective;
        let budget = 3 * level.params.l as u64;

        let n = self.dataset.len();
        let mut seen = vec![0u64; n.div_ceil(64)];
        let mut found: Vec<PointId> = Vec::with_capacity(k);
        let mut scanned = 0u64;
        for j in 0..level.params.l {
            let key = level.key(self.dataset.dim(), j, q);
            for &(_, id) in level.bucket(j, key) {
                let (word, bit) = (id as usize / 64, id as usize % 64);
                if seen[word] >> bit & 1 == 1 {
                    continue;
                }
                seen[word] |= 1 << bit;
                scanned += 1;
                if dist(q, self.dataset.point(id)) <= outer {
                    found.push(id);
                    if found.len() == k {
                        return Ok(BackendAnswer {
                            ids: Some(found),
                            candidates_scanned: scanned,
                            effective_radius: effective,
                        });
                    }
                }
                if scanned >= budget {
                    return Ok(BackendAnswer {
                        ids: None,
                        candidates_scanned: scanned,
                        effective_radius: effective,
                    });
                }
            }
        }
        Ok(BackendAnswer {
            ids: None,
            candidates_scanned: scanned,
            effective_radius: effective,
        })
    }
}
