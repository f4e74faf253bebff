//! Delaunay triangulation in 1 to 6 dimensions.
//!
//! Construction is incremental: simplices conflicting with each new site are
//! carved out and the cavity is re-filled with simplices through the site
//! (Bowyer-Watson). The triangulation is compactified with a single infinite
//! vertex so hull growth needs no special cases; a simplex holding the
//! infinite vertex conflicts with a site exactly when the site lies beyond
//! its hull facet. Sites are inserted in Morton order and located by a
//! remembering stochastic walk from the previously created simplex.
//!
//! Predicates are floating point with a relative epsilon guard; ambiguous
//! cases restart the build with a slightly perturbed copy of the sites.
//! `verify_empty_sphere` recomputes every circumsphere from scratch and is
//! the independent check the builder is tested against.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{derive_seed, dist, dist_sq};
use crate::error::{HdgError, Result};

/// Largest supported dimension for triangulation (and index construction).
pub const MAX_DIM: usize = 6;

/// Strictness tolerance of the verifier: a site counts as inside a
/// circumsphere only below radius * (1 - VERIFY_EPS).
const VERIFY_EPS: f64 = 1e-9;

/// Predicate ambiguity guard, relative to the Hadamard bound of the
/// determinant. The bound overshoots the true magnitude by orders, so this
/// sits well above f64 noise while letting jitter-scale signals resolve.
const PREDICATE_GUARD: f64 = 1e-12;

const INF: u32 = u32::MAX;

/// A Delaunay triangulation presented as a graph plus its simplices.
///
/// `adjacency[v]` is the sorted list of neighbors of site `v`; `simplices`
/// are sorted (d+1)-tuples of site indices. For fewer than d+2 sites the
/// graph is complete and carries one simplex only when the sites form a
/// full-dimensional one.
#[derive(Debug, Clone, PartialEq)]
pub struct DtGraph {
    pub dim: usize,
    pub adjacency: Vec<Vec<u32>>,
    pub simplices: Vec<Vec<u32>>,
}

impl DtGraph {
    pub fn n_sites(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// Edges as sorted (a, b) pairs with a < b.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &b in nbrs {
                if (a as u32) < b {
                    out.push((a as u32, b));
                }
            }
        }
        out
    }
}

/// Maximum vertex degree of the graph.
pub fn max_degree(graph: &DtGraph) -> usize {
    graph.adjacency.iter().map(|a| a.len()).max().unwrap_or(0)
}

/// One failed check found by [`verify_empty_sphere`].
#[derive(Debug, Clone, PartialEq)]
pub enum DtViolation {
    /// Another site lies strictly inside the simplex circumsphere.
    NonEmptySphere { simplex: Vec<u32>, offender: u32 },
    /// The circumsphere of a simplex could not be computed.
    DegenerateSimplex { simplex: Vec<u32> },
    /// `to` is missing from `from`'s neighbor list.
    AsymmetricAdjacency { from: u32, to: u32 },
    /// An edge claimed by the graph belongs to no simplex.
    EdgeWithoutSimplex { a: u32, b: u32 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DtVerifyReport {
    pub violations: Vec<DtViolation>,
}

impl DtVerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the empty-circumsphere property of every simplex against all
/// sites, adjacency symmetry, and (in 2 dimensions) that every claimed edge
/// is backed by a simplex. A site strictly inside means its distance to the
/// circumcenter is below radius * (1 - 1e-9).
pub fn verify_empty_sphere(dim: usize, sites: &[f64], graph: &DtGraph) -> DtVerifyReport {
    let n = sites.len() / dim;
    let mut report = DtVerifyReport::default();
    let site = |i: u32| &sites[i as usize * dim..(i as usize + 1) * dim];

    for simplex in &graph.simplices {
        let pts: Vec<&[f64]> = simplex.iter().map(|&v| site(v)).collect();
        match circumsphere(dim, &pts) {
            Some((center, radius)) => {
                let strict = radius * (1.0 - VERIFY_EPS);
                for other in 0..n as u32 {
                    if simplex.contains(&other) {
                        continue;
                    }
                    if dist(&center, site(other)) < strict {
                        report.violations.push(DtViolation::NonEmptySphere {
                            simplex: simplex.clone(),
                            offender: other,
                        });
                    }
                }
            }
            None => report.violations.push(DtViolation::DegenerateSimplex {
                simplex: simplex.clone(),
            }),
        }
    }

    for (a, nbrs) in graph.adjacency.iter().enumerate() {
        for &b in nbrs {
            if !graph.adjacency[b as usize].contains(&(a as u32)) {
                report.violations.push(DtViolation::AsymmetricAdjacency {
                    from: a as u32,
                    to: b,
                });
            }
        }
    }

    if dim == 2 && n >= dim + 2 {
        let mut covered: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
        for simplex in &graph.simplices {
            for i in 0..simplex.len() {
                for j in i + 1..simplex.len() {
                    let (a, b) = (simplex[i].min(simplex[j]), simplex[i].max(simplex[j]));
                    covered.insert((a, b));
                }
            }
        }
        for (a, b) in graph.edges() {
            if !covered.contains(&(a, b)) {
                report
                    .violations
                    .push(DtViolation::EdgeWithoutSimplex { a, b });
            }
        }
    }

    report
}

/// Circumcenter and radius of a full-dimensional simplex; `None` when the
/// defining linear system is near-singular.
pub fn circumsphere(dim: usize, pts: &[&[f64]]) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(pts.len(), dim + 1);
    let base = pts[0];
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for i in 0..dim {
        let mut norm = 0.0;
        for j in 0..dim {
            let v = pts[i + 1][j] - base[j];
            a[i * dim + j] = 2.0 * v;
            norm += v * v;
        }
        b[i] = norm;
    }
    let x = solve(&mut a, &mut b, dim)?;
    let center: Vec<f64> = base.iter().zip(&x).map(|(p, d)| p + d).collect();
    let radius = pts
        .iter()
        .map(|p| dist_sq(&center, p))
        .fold(0.0_f64, f64::max)
        .sqrt();
    Some((center, radius))
}

fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
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

/// Builds the Delaunay triangulation of `sites` (flattened, row-major).
///
/// Deterministic for a fixed seed; the seed drives the walk randomization
/// and the perturbation fallback for degenerate inputs.
pub fn build_delaunay(dim: usize, sites: &[f64], seed: u64) -> Result<DtGraph> {
    if dim == 0 || dim > MAX_DIM {
        return Err(HdgError::UnsupportedDimension {
            dim,
            max: MAX_DIM,
        });
    }
    if sites.is_empty() || !sites.len().is_multiple_of(dim) {
        return Err(HdgError::invalid(
            "site buffer must hold at least one point and a whole number of them",
        ));
    }
    if sites.iter().any(|v| !v.is_finite()) {
        return Err(HdgError::invalid("non-finite site coordinate"));
    }
    let n = sites.len() / dim;

    if dim == 1 {
        return Ok(path_graph(sites));
    }
    if n <= dim + 1 {
        return Ok(complete_graph(dim, sites));
    }

    let diameter = bounding_diameter(dim, sites);
    let mut working: Vec<f64> = sites.to_vec();
    for attempt in 0..6u64 {
        match Triangulator::run(dim, &working, derive_seed(seed, attempt)) {
            Ok(graph) => return Ok(graph),
            Err(TriFailure::Degenerate) => {
                let eta = if diameter > 0.0 {
                    1e-9 * diameter * 4.0_f64.powi(attempt as i32)
                } else {
                    1e-9 * 4.0_f64.powi(attempt as i32)
                };
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6a69_7474 + attempt));
                working = sites
                    .iter()
                    .map(|&x| x + rng.random_range(-eta..=eta))
                    .collect();
            }
        }
    }
    Err(HdgError::Internal(
        "triangulation degeneracy persisted after repeated perturbation".into(),
    ))
}

fn bounding_diameter(dim: usize, sites: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in sites.chunks_exact(dim) {
            lo = lo.min(p[d]);
            hi = hi.max(p[d]);
        }
        acc += (hi - lo) * (hi - lo);
    }
    acc.sqrt()
}

fn path_graph(sites: &[f64]) -> DtGraph {
    let n = sites.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| {
        sites[a as usize]
            .total_cmp(&sites[b as usize])
            .then(a.cmp(&b))
    });
    let mut adjacency = vec![Vec::new(); n];
    let mut simplices = Vec::new();
    for w in order.windows(2) {
        adjacency[w[0] as usize].push(w[1]);
        adjacency[w[1] as usize].push(w[0]);
        let mut s = vec![w[0], w[1]];
        s.sort_unstable();
        simplices.push(s);
    }
    for a in &mut adjacency {
        a.sort_unstable();
    }
    simplices.sort();
    DtGraph {
        dim: 1,
        adjacency,
        simplices,
    }
}

fn complete_graph(dim: usize, sites: &[f64]) -> DtGraph {
    let n = sites.len() / dim;
    let mut adjacency = vec![Vec::new(); n];
    for a in 0..n as u32 {
        for b in 0..n as u32 {
            if a != b {
                adjacency[a as usize].push(b);
            }
        }
    }
    let mut simplices = Vec::new();
    if n == dim + 1 {
        let pts: Vec<&[f64]> = (0..n).map(|i| &sites[i * dim..(i + 1) * dim]).collect();
        if circumsphere(dim, &pts).is_some() {
            simplices.push((0..n as u32).collect());
        }
    }
    DtGraph {
        dim,
        adjacency,
        simplices,
    }
}

enum TriFailure {
    /// A predicate was too close to zero (or the seed simplex search
    /// failed); the caller retries on perturbed sites.
    Degenerate,
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Pos,
    Neg,
}

struct Triangulator<'a> {
    dim: usize,
    sites: &'a [f64],
    /// Simplex vertex ids, stride dim+1; `INF` marks the infinite vertex.
    verts: Vec<u32>,
    /// neighbors[s*k + a] = simplex across the facet opposite verts[s*k + a].
    nbrs: Vec<u32>,
    alive: Vec<bool>,
    alive_count: usize,
    rng: ChaCha8Rng,
    hint: u32,
}

impl<'a> Triangulator<'a> {
    fn run(dim: usize, sites: &'a [f64], seed: u64) -> std::result::Result<DtGraph, TriFailure> {
        let n = sites.len() / dim;
        let seeds = affinely_independent_seed(dim, sites).ok_or(TriFailure::Degenerate)?;
        let mut tri = Triangulator {
            dim,
            sites,
            verts: Vec::new(),
            nbrs: Vec::new(),
            alive: Vec::new(),
            alive_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            hint: 0,
        };
        tri.init(&seeds);
        let in_seed = |i: &u32| seeds.contains(i);
        let mut rest: Vec<u32> = (0..n as u32).filter(|i| !in_seed(i)).collect();
        let keys = morton_keys(dim, sites);
        rest.sort_by_key(|&i| (keys[i as usize], i));
        for p in rest {
            tri.insert(p)?;
        }
        Ok(tri.extract())
    }

    fn site(&self, v: u32) -> &[f64] {
        &self.sites[v as usize * self.dim..(v as usize + 1) * self.dim]
    }

    fn stride(&self) -> usize {
        self.dim + 1
    }

    fn simplex_verts(&self, s: u32) -> &[u32] {
        let k = self.stride();
        &self.verts[s as usize * k..(s as usize + 1) * k]
    }

    fn alloc(&mut self, verts: &[u32]) -> u32 {
        let id = self.alive.len() as u32;
        self.verts.extend_from_slice(verts);
        self.nbrs.extend(std::iter::repeat_n(INF, self.stride()));
        self.alive.push(true);
        self.alive_count += 1;
        id
    }

    fn init(&mut self, seeds: &[u32]) {
        let k = self.stride();
        let finite = self.alloc(seeds);
        let mut infinite = Vec::with_capacity(k);
        for a in 0..k {
            let mut v: Vec<u32> = Vec::with_capacity(k);
            for (j, &s) in seeds.iter().enumerate() {
                if j != a {
                    v.push(s);
                }
            }
            v.push(INF);
            infinite.push(self.alloc(&v));
        }
        for a in 0..k {
            self.nbrs[finite as usize * k + a] = infinite[a];
            let inf_a = infinite[a] as usize;
            self.nbrs[inf_a * k + self.dim] = finite;
            for j in 0..self.dim {
                let u_index = if j < a { j } else { j + 1 };
                self.nbrs[inf_a * k + j] = infinite[u_index];
            }
        }
        self.hint = finite;
    }

    /// Strict side of `x` relative to the hyperplane through `facet`.
    fn side_of(&self, facet: &[u32], x: &[f64]) -> Option<Side> {
        let d = self.dim;
        let base = self.site(facet[0]);
        let mut m = vec![0.0; d * d];
        for i in 1..d {
            let p = self.site(facet[i]);
            for j in 0..d {
                m[(i - 1) * d + j] = p[j] - base[j];
            }
        }
        for j in 0..d {
            m[(d - 1) * d + j] = x[j] - base[j];
        }
        det_sign(&mut m, d)
    }

    /// True when `x` lies strictly inside the circumsphere of the finite
    /// simplex `s`; `None` when a predicate is ambiguous.
    fn in_circumsphere(&self, s: u32, x: &[f64]) -> Option<bool> {
        let d = self.dim;
        let verts = self.simplex_verts(s);
        let mut lifted = vec![0.0; (d + 1) * (d + 1)];
        for (i, &v) in verts.iter().enumerate() {
            let p = self.site(v);
            let mut norm = 0.0;
            for j in 0..d {
                let diff = p[j] - x[j];
                lifted[i * (d + 1) + j] = diff;
                norm += diff * diff;
            }
            lifted[i * (d + 1) + d] = norm;
        }
        let ins = det_sign(&mut lifted, d + 1)?;

        let mut orient = vec![0.0; d * d];
        let last = self.site(verts[d]);
        for i in 0..d {
            let p = self.site(verts[i]);
            for j in 0..d {
                orient[i * d + j] = p[j] - last[j];
            }
        }
        let ori = det_sign(&mut orient, d)?;
        Some(ins == ori)
    }

    /// Conflict: for a finite simplex, `x` inside the circumsphere; for an
    /// infinite one, `x` strictly beyond its hull facet.
    fn conflicts(&self, s: u32, x: &[f64]) -> Option<bool> {
        let verts = self.simplex_verts(s);
        match verts.iter().position(|&v| v == INF) {
            None => self.in_circumsphere(s, x),
            Some(slot) => {
                let facet: Vec<u32> = verts.iter().copied().filter(|&v| v != INF).collect();
                let inner = self.nbrs[s as usize * self.stride() + slot];
                let apex = *self
                    .simplex_verts(inner)
                    .iter()
                    .find(|v| !facet.contains(v))
                    .expect("finite neighbor has an apex");
                let sx = self.side_of(&facet, x)?;
                let sa = self.side_of(&facet, self.site(apex))?;
                Some(sx != sa)
            }
        }
    }

    /// Walks from the hint to some simplex in conflict with `x`.
    fn locate(&mut self, x: &[f64]) -> std::result::Result<u32, TriFailure> {
        let k = self.stride();
        let mut cur = self.hint;
        let max_steps = 8 * self.alive_count + 64;
        for _ in 0..max_steps {
            debug_assert!(self.alive[cur as usize]);
            let verts = self.simplex_verts(cur).to_vec();
            if let Some(slot) = verts.iter().position(|&v| v == INF) {
                match self.conflicts(cur, x) {
                    Some(true) => return Ok(cur),
                    Some(false) => {
                        cur = self.nbrs[cur as usize * k + slot];
                        continue;
                    }
                    None => return Err(TriFailure::Degenerate),
                }
            }
            let offset = self.rng.random_range(0..k);
            let mut moved = false;
            let mut facet = Vec::with_capacity(self.dim);
            for step in 0..k {
                let a = (offset + step) % k;
                facet.clear();
                facet.extend(verts.iter().enumerate().filter_map(|(j, &v)| {
                    (j != a).then_some(v)
                }));
                let sx = self.side_of(&facet, x).ok_or(TriFailure::Degenerate)?;
                let sa = self
                    .side_of(&facet, self.site(verts[a]))
                    .ok_or(TriFailure::Degenerate)?;
                if sx != sa {
                    cur = self.nbrs[cur as usize * k + a];
                    moved = true;
                    break;
                }
            }
            if !moved {
                // Inside this simplex, hence inside its circumsphere.
                return Ok(cur);
            }
        }
        // Walk did not settle; scan everything.
        for s in 0..self.alive.len() as u32 {
            if self.alive[s as usize] {
                match self.conflicts(s, x) {
                    Some(true) => return Ok(s),
                    Some(false) => {}
                    None => return Err(TriFailure::Degenerate),
                }
            }
        }
        Err(TriFailure::Degenerate)
    }

    fn insert(&mut self, p: u32) -> std::result::Result<(), TriFailure> {
        let x = self.site(p).to_vec();
        let k = self.stride();
        let start = self.locate(&x)?;

        // Flood the facet-connected conflict region.
        let mut status: HashMap<u32, bool> = HashMap::new();
        status.insert(start, true);
        let mut cavity = vec![start];
        let mut stack = vec![start];
        let mut boundary: Vec<(Vec<u32>, u32, usize)> = Vec::new();
        while let Some(s) = stack.pop() {
            for a in 0..k {
                let t = self.nbrs[s as usize * k + a];
                let known = status.get(&t).copied();
                let is_conflict = match known {
                    Some(v) => v,
                    None => {
                        let v = self.conflicts(t, &x).ok_or(TriFailure::Degenerate)?;
                        status.insert(t, v);
                        if v {
                            cavity.push(t);
                            stack.push(t);
                        }
                        v
                    }
                };
                if !is_conflict {
                    let facet: Vec<u32> = self
                        .simplex_verts(s)
                        .iter()
                        .enumerate()
                        .filter_map(|(j, &v)| (j != a).then_some(v))
                        .collect();
                    let backslot = (0..k)
                        .find(|&b| self.nbrs[t as usize * k + b] == s)
                        .expect("neighbor links are mutual");
                    boundary.push((facet, t, backslot));
                }
            }
        }

        for &s in &cavity {
            self.alive[s as usize] = false;
            self.alive_count -= 1;
        }

        // Fill the cavity: one new simplex per boundary facet, the new site
        // in the last slot. Ridges shared by two new simplices pair them up.
        let mut ridge_map: HashMap<Vec<u32>, (u32, usize)> = HashMap::new();
        let mut last = self.hint;
        for (facet, outside, backslot) in boundary {
            let mut verts = facet.clone();
            verts.push(p);
            let s = self.alloc(&verts);
            self.nbrs[s as usize * k + self.dim] = outside;
            self.nbrs[outside as usize * k + backslot] = s;
            for j in 0..self.dim {
                let mut ridge: Vec<u32> = facet
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &v)| (i != j).then_some(v))
                    .collect();
                ridge.sort_unstable();
                match ridge_map.remove(&ridge) {
                    Some((other, oslot)) => {
                        self.nbrs[s as usize * k + j] = other;
                        self.nbrs[other as usize * k + oslot] = s;
                    }
                    None => {
                        ridge_map.insert(ridge, (s, j));
                    }
                }
            }
            last = s;
        }
        debug_assert!(ridge_map.is_empty(), "unmatched cavity ridges");
        self.hint = last;
        Ok(())
    }

    fn extract(&self) -> DtGraph {
        let n = self.sites.len() / self.dim;
        let k = self.stride();
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut simplices = Vec::new();
        for s in 0..self.alive.len() {
            if !self.alive[s] {
                continue;
            }
            let verts = &self.verts[s * k..(s + 1) * k];
            if verts.contains(&INF) {
                continue;
            }
            let mut tuple = verts.to_vec();
            tuple.sort_unstable();
            for i in 0..tuple.len() {
                for j in i + 1..tuple.len() {
                    adjacency[tuple[i] as usize].push(tuple[j]);
                    adjacency[tuple[j] as usize].push(tuple[i]);
                }
            }
            simplices.push(tuple);
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        simplices.sort();
        DtGraph {
            dim: self.dim,
            adjacency,
            simplices,
        }
    }
}

/// Determinant sign with a Hadamard-scaled ambiguity guard.
fn det_sign(m: &mut [f64], n: usize) -> Option<Side> {
    let mut scale = 1.0;
    for i in 0..n {
        let norm: f64 = (0..n)
            .map(|j| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        scale *= norm;
    }
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty range");
        if m[pivot * n + col] == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        det *= m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for j in col..n {
                m[row * n + j] -= f * m[col * n + j];
            }
        }
    }
    if !det.is_finite() || det.abs() <= PREDICATE_GUARD * scale {
        return None;
    }
    Some(if det > 0.0 { Side::Pos } else { Side::Neg })
}

/// Greedily selects d+1 sites spanning the full dimension.
fn affinely_independent_seed(dim: usize, sites: &[f64]) -> Option<Vec<u32>> {
    let n = sites.len() / dim;
    let diameter = bounding_diameter(dim, sites);
    if diameter == 0.0 {
        return None;
    }
    let site = |i: usize| &sites[i * dim..(i + 1) * dim];
    let mut chosen = vec![0u32];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 1..n {
        if chosen.len() == dim + 1 {
            break;
        }
        let mut v: Vec<f64> = site(i)
            .iter()
            .zip(site(chosen[0] as usize))
            .map(|(a, b)| a - b)
            .collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (x, c) in v.iter_mut().zip(b) {
                *x -= dot * c;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * diameter {
            for x in &mut v {
                *x /= norm;
            }
            basis.push(v);
            chosen.push(i as u32);
        }
    }
    (chosen.len() == dim + 1).then_some(chosen)
}

/// Morton (z-order) keys for spatially coherent insertion.
fn morton_keys(dim: usize, sites: &[f64]) -> Vec<u64> {
    let n = sites.len() / dim;
    let bits = (63 / dim).min(21);
    let levels = (1u64 << bits) as f64;
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in sites.chunks_exact(dim) {
        for j in 0..dim {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let mut keys = Vec::with_capacity(n);
    for p in sites.chunks_exact(dim) {
        let mut cells = vec![0u64; dim];
        for j in 0..dim {
            let w = hi[j] - lo[j];
            let t = if w > 0.0 { (p[j] - lo[j]) / w } else { 0.0 };
            cells[j] = ((t * levels) as u64).min((1 << bits) - 1);
        }
        let mut key = 0u64;
        for bit in (0..bits).rev() {
            for c in &cells {
                key = (key << 1) | ((c >> bit) & 1);
            }
        }
        keys.push(key);
    }
    keys
}
