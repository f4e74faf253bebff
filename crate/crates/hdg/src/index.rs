//! The hierarchical index: a balanced median split tree whose nodes carry
//! approximate enclosing spheres, with the nodes of every layer joined by
//! the Delaunay triangulation of their sphere centers.
//!
//! Also home to the versioned binary index file. The file embeds the
//! (jittered) dataset so queries and benchmarks run from the index alone.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ames::{ames, DEFAULT_EPSILON};
use crate::dataset::{derive_seed, dist, Dataset, PointId};
use crate::delaunay::{build_delaunay, verify_empty_sphere, DtGraph, MAX_DIM};
use crate::error::{HdgError, Result};
use crate::sphere::Sphere;
use crate::split_tree::{balance_to_bmst, build_mst};

const MAGIC: &[u8; 4] = b"HDG1";
const END_MARK: &[u8; 4] = b"HDGE";
const VERSION: u32 = 1;

/// Construction parameters. Randomness flows from two seeds: `jitter_seed`
/// perturbed the dataset, `algo_seed` drives triangulation tie-breaking (and
/// seeds the LSH backend downstream).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub epsilon: f64,
    pub algo_seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            epsilon: DEFAULT_EPSILON,
            algo_seed: 0,
        }
    }
}

/// One index node: a subset of points, its enclosing sphere, tree children
/// and same-layer triangulation neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct HdgNode {
    pub node_id: u32,
    pub depth: u32,
    pub point_ids: Vec<PointId>,
    pub sphere: Sphere,
    pub children: Vec<u32>,
    pub graph_neighbors: Vec<u32>,
}

/// The full layered index plus the jittered dataset it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Hdg {
    pub dataset: Dataset,
    pub nodes: Vec<HdgNode>,
    /// Node ids per depth; node ids are depth-major so each layer is a
    /// contiguous run.
    pub layers: Vec<Vec<u32>>,
    pub params: BuildParams,
}

impl Hdg {
    pub fn n_points(&self) -> usize {
        self.dataset.len()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn root(&self) -> &HdgNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> &HdgNode {
        &self.nodes[id as usize]
    }

    /// Maximum triangulation degree per layer.
    pub fn layer_max_degrees(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|&id| self.nodes[id as usize].graph_neighbors.len())
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Flattened centers of one layer, in layer order.
    fn layer_centers(&self, layer: &[u32]) -> Vec<f64> {
        let mut centers = Vec::with_capacity(layer.len() * self.dim());
        for &id in layer {
            centers.extend_from_slice(&self.nodes[id as usize].sphere.center);
        }
        centers
    }
}

/// Builds the index: median split tree, balanced; an approximate enclosing
/// sphere per node; a Delaunay triangulation per layer over the node
/// centers.
pub fn build_index(dataset: &Dataset, params: BuildParams) -> Result<Hdg> {
    if dataset.dim() > MAX_DIM {
        return Err(HdgError::UnsupportedDimension {
            dim: dataset.dim(),
            max: MAX_DIM,
        });
    }
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(HdgError::invalid("epsilon must lie in (0,1)"));
    }
    if dataset.len() > 1 && !dataset.coordinates_distinct() {
        return Err(HdgError::invalid(
            "points share coordinates; jitter the dataset first",
        ));
    }

    let bmst = balance_to_bmst(&build_mst(dataset)?);

    let mut nodes: Vec<HdgNode> = bmst
        .nodes
        .iter()
        .map(|n| {
            let sphere = ames(dataset, &n.point_ids, params.epsilon)?;
            Ok(HdgNode {
                node_id: n.node_id,
                depth: n.depth,
                point_ids: n.point_ids.clone(),
                sphere,
                children: n.children.clone(),
                graph_neighbors: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;

    let mut hdg = Hdg {
        dataset: dataset.clone(),
        nodes: Vec::new(),
        layers: bmst.layers,
        params,
    };
    for (depth, layer) in hdg.layers.clone().iter().enumerate() {
        if layer.len() < 2 {
            continue;
        }
        let mut centers = Vec::with_capacity(layer.len() * dataset.dim());
        for &id in layer {
            centers.extend_from_slice(&nodes[id as usize].sphere.center);
        }
        let graph = build_delaunay(
            dataset.dim(),
            &centers,
            derive_seed(params.algo_seed, depth as u64),
        )?;
        for (local, &id) in layer.iter().enumerate() {
            nodes[id as usize].graph_neighbors = graph.adjacency[local]
                .iter()
                .map(|&other| layer[other as usize])
                .collect();
        }
    }
    hdg.nodes = nodes;
    Ok(hdg)
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            name,
            passed,
            detail,
        });
    }
}

/// Re-derives every structural invariant of the index: partitions, sphere
/// enclosure, layer shape, adjacency symmetry, and the per-layer empty-
/// sphere property (checked by rebuilding each layer triangulation from the
/// stored centers and comparing edge sets).
pub fn validate_index(hdg: &Hdg) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = hdg.n_points();

    // Root coverage.
    let mut root_ids: Vec<PointId> = hdg.root().point_ids.clone();
    root_ids.sort_unstable();
    root_ids.dedup();
    report.push(
        "root_holds_all_points",
        root_ids.len() == n && root_ids.first() == Some(&0),
        format!("{} of {} ids at the root", root_ids.len(), n),
    );

    // Children partition their parent.
    let mut partition_ok = true;
    let mut partition_detail = String::from("ok");
    for node in &hdg.nodes {
        if node.children.is_empty() {
            continue;
        }
        let mut union = Vec::new();
        for &ch in &node.children {
            let child = &hdg.nodes[ch as usize];
            if child.depth != node.depth + 1 {
                partition_ok = false;
                partition_detail = format!("child {ch} depth mismatch under node {}", node.node_id);
            }
            union.extend_from_slice(&child.point_ids);
        }
        let before = union.len();
        union.sort_unstable();
        union.dedup();
        let mut own = node.point_ids.clone();
        own.sort_unstable();
        if union.len() != before || union != own {
            partition_ok = false;
            partition_detail = format!("node {} children do not partition it", node.node_id);
        }
    }
    report.push("children_partition_parent", partition_ok, partition_detail);

    // Sphere enclosure (exact closed-ball membership).
    let mut enclosure_ok = true;
    let mut enclosure_detail = String::from("ok");
    'outer: for node in &hdg.nodes {
        for &pid in &node.point_ids {
            if dist(&node.sphere.center, hdg.dataset.point(pid)) > node.sphere.radius {
                enclosure_ok = false;
                enclosure_detail = format!("point {pid} escapes sphere of node {}", node.node_id);
                break 'outer;
            }
        }
    }
    report.push("sphere_enclosure", enclosure_ok, enclosure_detail);

    // Layer shape: full binary layers above the flattening depth, all
    // leaves singletons at uniform depth, every layer partitions the set.
    let flatten = crate::split_tree::flatten_depth(n);
    let mut shape_ok = true;
    let mut shape_detail = String::from("ok");
    if n == 1 {
        if hdg.layers.len() != 1 || hdg.layers[0].len() != 1 {
            shape_ok = false;
            shape_detail = "singleton index must be a lone root".into();
        }
    } else {
        if hdg.layers.len() as u32 != flatten + 2 {
            shape_ok = false;
            shape_detail = format!(
                "expected {} layers, found {}",
                flatten + 2,
                hdg.layers.len()
            );
        }
        for (i, layer) in hdg.layers.iter().enumerate() {
            let expected = if (i as u32) <= flatten { 1 << i } else { n };
            if layer.len() != expected {
                shape_ok = false;
                shape_detail = format!("layer {i} has {} nodes, expected {expected}", layer.len());
            }
        }
        if let Some(leaves) = hdg.layers.last() {
            if !leaves
                .iter()
                .all(|&id| hdg.nodes[id as usize].point_ids.len() == 1)
            {
                shape_ok = false;
                shape_detail = "non-singleton leaf".into();
            }
        }
    }
    for (i, layer) in hdg.layers.iter().enumerate() {
        let total: usize = layer
            .iter()
            .map(|&id| hdg.nodes[id as usize].point_ids.len())
            .sum();
        if total != n {
            shape_ok = false;
            shape_detail = format!("layer {i} covers {total} of {n} points");
        }
        for &id in layer {
            if hdg.nodes[id as usize].depth != i as u32 {
                shape_ok = false;
                shape_detail = format!("node {id} depth disagrees with layer {i}");
            }
        }
    }
    report.push("layer_shape", shape_ok, shape_detail);

    // Neighbor lists: same layer, symmetric.
    let mut sym_ok = true;
    let mut sym_detail = String::from("ok");
    for node in &hdg.nodes {
        for &nb in &node.graph_neighbors {
            let other = &hdg.nodes[nb as usize];
            if other.depth != node.depth {
                sym_ok = false;
                sym_detail = format!("cross-layer edge {} -> {nb}", node.node_id);
            }
            if !other.graph_neighbors.contains(&node.node_id) {
                sym_ok = false;
                sym_detail = format!("asymmetric edge {} -> {nb}", node.node_id);
            }
        }
    }
    report.push("neighbor_symmetry", sym_ok, sym_detail);

    // Per-layer triangulation: rebuild from stored centers, compare edges,
    // then run the empty-sphere check on the rebuild.
    let mut dt_ok = true;
    let mut dt_detail = String::from("ok");
    for (depth, layer) in hdg.layers.iter().enumerate() {
        if layer.len() < 2 {
            if let Some(&id) = layer.first() {
                if !hdg.nodes[id as usize].graph_neighbors.is_empty() {
                    dt_ok = false;
                    dt_detail = format!("layer {depth} singleton has neighbors");
                }
            }
            continue;
        }
        let centers = hdg.layer_centers(layer);
        let graph = match build_delaunay(
            hdg.dim(),
            &centers,
            derive_seed(hdg.params.algo_seed, depth as u64),
        ) {
            Ok(g) => g,
            Err(e) => {
                dt_ok = false;
                dt_detail = format!("layer {depth} triangulation failed: {e}");
                continue;
            }
        };
        let stored: HashSet<(u32, u32)> = layer
            .iter()
            .enumerate()
            .flat_map(|(local, &id)| {
                hdg.nodes[id as usize]
                    .graph_neighbors
                    .iter()
                    .map(move |&nb| (local as u32, nb))
            })
            .map(|(local, nb_global)| {
                let nb_local = layer
                    .binary_search(&nb_global)
                    .map(|i| i as u32)
                    .unwrap_or(u32::MAX);
                (local.min(nb_local), local.max(nb_local))
            })
            .collect();
        let rebuilt: HashSet<(u32, u32)> = graph.edges().into_iter().collect();
        if stored != rebuilt {
            dt_ok = false;
            dt_detail = format!(
                "layer {depth} edges differ from rebuild ({} stored vs {} rebuilt)",
                stored.len(),
                rebuilt.len()
            );
        }
        let verify = verify_empty_sphere(hdg.dim(), &centers, &graph);
        if !verify.ok() {
            dt_ok = false;
            dt_detail = format!(
                "layer {depth} empty-sphere violations: {}",
                verify.violations.len()
            );
        }
    }
    report.push("layer_delaunay", dt_ok, dt_detail);

    report
}

/// Rebuilds a layer's triangulation for external inspection.
pub fn layer_delaunay(hdg: &Hdg, depth: usize) -> Result<DtGraph> {
    let layer = hdg
        .layers
        .get(depth)
        .ok_or_else(|| HdgError::invalid(format!("no layer {depth}")))?;
    build_delaunay(
        hdg.dim(),
        &hdg.layer_centers(layer),
        derive_seed(hdg.params.algo_seed, depth as u64),
    )
}

// ---------------------------------------------------------------------------
// Binary persistence.
//
// Header: magic "HDG1", u32 version, u32 dim, u64 n, f64 epsilon,
// u64 jitter_seed, u64 algo_seed, u32 flags, u32 layer count, u64 node
// count, then per-layer node counts, the flattened dataset coordinates, and
// the nodes in depth-major id order. Little-endian, 8-byte reals, "HDGE"
// end marker.
// ---------------------------------------------------------------------------

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn fail(&self, reason: impl Into<String>) -> HdgError {
        HdgError::Format {
            offset: self.offset,
            reason: reason.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(self.fail(format!("truncated while reading {what}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    fn id_list(&mut self, what: &str, max: u64) -> Result<Vec<u32>> {
        let count = self.u32(what)? as u64;
        if count > max {
            return Err(self.fail(format!("{what} count {count} exceeds limit {max}")));
        }
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            out.push(self.u32(what)?);
        }
        Ok(out)
    }
}

fn w32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn wf64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

/// Serializes the index (see module notes for the layout).
pub fn save_index(hdg: &Hdg, sink: impl Write) -> Result<()> {
    let mut w = BufWriter::new(sink);
    w.write_all(MAGIC)?;
    w32(&mut w, VERSION)?;
    w32(&mut w, hdg.dim() as u32)?;
    w64(&mut w, hdg.n_points() as u64)?;
    wf64(&mut w, hdg.params.epsilon)?;
    w64(&mut w, hdg.dataset.jitter_seed().unwrap_or(u64::MAX))?;
    w64(&mut w, hdg.params.algo_seed)?;
    w32(&mut w, 0)?; // flags, reserved
    w32(&mut w, hdg.layers.len() as u32)?;
    w64(&mut w, hdg.nodes.len() as u64)?;
    for layer in &hdg.layers {
        w64(&mut w, layer.len() as u64)?;
    }
    for &x in hdg.dataset.flat_coords() {
        wf64(&mut w, x)?;
    }
    for node in &hdg.nodes {
        w32(&mut w, node.node_id)?;
        w32(&mut w, node.depth)?;
        w32(&mut w, node.point_ids.len() as u32)?;
        for &pid in &node.point_ids {
            w32(&mut w, pid)?;
        }
        for &c in &node.sphere.center {
            wf64(&mut w, c)?;
        }
        wf64(&mut w, node.sphere.radius)?;
        w32(&mut w, node.children.len() as u32)?;
        for &ch in &node.children {
            w32(&mut w, ch)?;
        }
        w32(&mut w, node.graph_neighbors.len() as u32)?;
        for &nb in &node.graph_neighbors {
            w32(&mut w, nb)?;
        }
    }
    w.write_all(END_MARK)?;
    w.flush()?;
    Ok(())
}

/// Reads an index back; structurally identical to what was saved.
pub fn load_index(source: impl Read) -> Result<Hdg> {
    let mut r = CountingReader::new(BufReader::new(source));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(HdgError::Format {
            offset: 0,
            reason: format!("bad magic {magic:02x?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(HdgError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let dim = r.u32("dim")? as usize;
    if dim == 0 || dim > MAX_DIM {
        return Err(r.fail(format!("dimension {dim} outside supported range")));
    }
    let n = r.u64("point count")?;
    if n == 0 || n > u32::MAX as u64 {
        return Err(r.fail(format!("point count {n} out of range")));
    }
    let epsilon = r.f64("epsilon")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(r.fail(format!("epsilon {epsilon} outside (0,1)")));
    }
    let jitter_seed = r.u64("jitter seed")?;
    let algo_seed = r.u64("algo seed")?;
    let flags = r.u32("flags")?;
    if flags != 0 {
        return Err(r.fail(format!("unknown flags {flags:#x}")));
    }
    let n_layers = r.u32("layer count")? as usize;
    let n_nodes = r.u64("node count")?;
    if n_nodes > 4 * n + 64 {
        return Err(r.fail(format!("node count {n_nodes} implausible for {n} points")));
    }

    let mut layer_sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_sizes.push(r.u64("layer size")?);
    }
    if layer_sizes.iter().sum::<u64>() != n_nodes {
        return Err(r.fail("layer sizes do not add up to the node count"));
    }

    let mut coords = Vec::with_capacity(n as usize * dim);
    for _ in 0..n as usize * dim {
        let x = r.f64("coordinate")?;
        if !x.is_finite() {
            return Err(r.fail(format!("non-finite coordinate {x}")));
        }
        coords.push(x);
    }
    let dataset = if jitter_seed == u64::MAX {
        Dataset::from_flat(dim, coords)?
    } else {
        Dataset::from_flat_jittered(dim, coords, jitter_seed)?
    };

    let mut nodes = Vec::with_capacity(n_nodes as usize);
    for expect_id in 0..n_nodes {
        let node_id = r.u32("node id")?;
        if node_id as u64 != expect_id {
            return Err(r.fail(format!(
                "node id {node_id} out of order (expected {expect_id})"
            )));
        }
        let depth = r.u32("node depth")?;
        let point_ids = r.id_list("point ids", n)?;
        if point_ids.is_empty() || point_ids.iter().any(|&p| p as u64 >= n) {
            return Err(r.fail(format!("node {node_id} has invalid point ids")));
        }
        let mut center = Vec::with_capacity(dim);
        for _ in 0..dim {
            center.push(r.f64("sphere center")?);
        }
        let radius = r.f64("sphere radius")?;
        if !(radius >= 0.0) {
            return Err(r.fail(format!("negative sphere radius {radius}")));
        }
        let children = r.id_list("children", n_nodes)?;
        let graph_neighbors = r.id_list("neighbors", n_nodes)?;
        if children.iter().chain(&graph_neighbors).any(|&x| x as u64 >= n_nodes) {
            return Err(r.fail(format!("node {node_id} references a missing node")));
        }
        nodes.push(HdgNode {
            node_id,
            depth,
            point_ids,
            sphere: Sphere::new(center, radius),
            children,
            graph_neighbors,
        });
    }

    let mut end = [0u8; 4];
    r.read_exact(&mut end, "end marker")?;
    if &end != END_MARK {
        return Err(r.fail("bad end marker"));
    }

    let mut layers = Vec::with_capacity(n_layers);
    let mut next = 0u32;
    for size in layer_sizes {
        let layer: Vec<u32> = (next..next + size as u32).collect();
        for &id in &layer {
            if nodes[id as usize].depth as usize != layers.len() {
                return Err(HdgError::Format {
                    offset: r.offset,
                    reason: format!("node {id} depth disagrees with its layer"),
                });
            }
        }
        next += size as u32;
        layers.push(layer);
    }

    Ok(Hdg {
        dataset,
        nodes,
        layers,
        params: BuildParams { epsilon, algo_seed },
    })
}

pub fn save_index_to_path(hdg: &Hdg, path: impl AsRef<Path>) -> Result<()> {
    save_index(hdg, File::create(path)?)
}

pub fn load_index_from_path(path: impl AsRef<Path>) -> Result<Hdg> {
    load_index(File::open(path)?)
}
