//! Median split trees.
//!
//! A point set is split recursively along the longest bounding-box dimension
//! at the coordinate median, producing a binary tree whose layer-i nodes
//! hold either ceil(n/2^i) or floor(n/2^i) points. The tree is then
//! rebalanced: at the shallowest layer i where floor(n/2^i) <= 3, every node
//! adopts the singleton leaves of its subtree directly (interior descendants
//! are dropped), so all leaves end up at depth i+1 and no node has more than
//! four children.

use crate::dataset::{Dataset, PointId};
use crate::error::{HdgError, Result};

/// Tight axis-parallel bounding box: per-dimension closed intervals attained
/// by some point on both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub intervals: Vec<(f64, f64)>,
}

impl BoundingBox {
    /// Index and length of the longest interval; ties go to the smallest
    /// dimension index.
    pub fn longest_dim(&self) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (a, b)) in self.intervals.iter().enumerate() {
            let len = b - a;
            if len > best.0 {
                best = (len, i);
            }
        }
        best.1
    }
}

/// Minimum bounding box of a subset of points.
pub fn mbb(ds: &Dataset, ids: &[PointId]) -> Result<BoundingBox> {
    if ids.is_empty() {
        return Err(HdgError::invalid("bounding box of empty set"));
    }
    let mut intervals = vec![(f64::INFINITY, f64::NEG_INFINITY); ds.dim()];
    for &id in ids {
        for (i, &x) in ds.point(id).iter().enumerate() {
            intervals[i].0 = intervals[i].0.min(x);
            intervals[i].1 = intervals[i].1.max(x);
        }
    }
    Ok(BoundingBox { intervals })
}

/// Outcome of one median split.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub split_dim: usize,
    pub split_value: f64,
    /// Points with coordinate <= split_value on split_dim; ceil(|P|/2) of them.
    pub left: Vec<PointId>,
    /// Points with coordinate > split_value; floor(|P|/2) of them.
    pub right: Vec<PointId>,
}

/// Splits a subset at the median of its longest bounding-box dimension.
///
/// The median is the ceil(|P|/2)-th smallest coordinate, found by selection
/// rather than a full sort. Coordinates are assumed distinct per dimension
/// (dataset jitter guarantees this); equal coordinates are ordered by id so
/// the split stays deterministic and balanced either way.
pub fn median_split(ds: &Dataset, ids: &[PointId]) -> Result<MedianSplit> {
    if ids.len() < 2 {
        return Err(HdgError::invalid("median split needs at least 2 points"));
    }
    let split_dim = mbb(ds, ids)?.longest_dim();
    let coord = |id: PointId| ds.point(id)[split_dim];
    let mut scratch: Vec<PointId> = ids.to_vec();
    let left_len = ids.len().div_ceil(2);
    scratch.select_nth_unstable_by(left_len - 1, |&a, &b| {
        coord(a).total_cmp(&coord(b)).then(a.cmp(&b))
    });
    let split_value = coord(scratch[left_len - 1]);
    let right = scratch.split_off(left_len);
    Ok(MedianSplit {
        split_dim,
        split_value,
        left: scratch,
        right,
    })
}

/// One node of a median split tree.
#[derive(Debug, Clone, PartialEq)]
pub struct MstNode {
    pub node_id: u32,
    pub depth: u32,
    pub point_ids: Vec<PointId>,
    pub split_dim: Option<usize>,
    pub split_value: Option<f64>,
    pub left: Option<u32>,
    pub right: Option<u32>,
}

impl MstNode {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

/// Median split tree over a full dataset; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct MstTree {
    pub nodes: Vec<MstNode>,
}

impl MstTree {
    pub fn root(&self) -> &MstNode {
        &self.nodes[0]
    }

    /// Node ids grouped by depth.
    pub fn layers(&self) -> Vec<Vec<u32>> {
        let max_depth = self.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        let mut layers = vec![Vec::new(); max_depth as usize + 1];
        for n in &self.nodes {
            layers[n.depth as usize].push(n.node_id);
        }
        layers
    }
}

/// Builds the median split tree by recursive splits down to singletons.
pub fn build_mst(ds: &Dataset) -> Result<MstTree> {
    let all: Vec<PointId> = (0..ds.len() as PointId).collect();
    let mut nodes = Vec::new();
    split_recursive(ds, all, 0, &mut nodes)?;
    Ok(MstTree { nodes })
}

fn split_recursive(
    ds: &Dataset,
    ids: Vec<PointId>,
    depth: u32,
    nodes: &mut Vec<MstNode>,
) -> Result<u32> {
    let node_id = nodes.len() as u32;
    nodes.push(MstNode {
        node_id,
        depth,
        point_ids: Vec::new(),
        split_dim: None,
        split_value: None,
        left: None,
        right: None,
    });
    if ids.len() == 1 {
        nodes[node_id as usize].point_ids = ids;
        return Ok(node_id);
    }
    let split = median_split(ds, &ids)?;
    let left = split_recursive(ds, split.left, depth + 1, nodes)?;
    let right = split_recursive(ds, split.right, depth + 1, nodes)?;
    let node = &mut nodes[node_id as usize];
    node.point_ids = ids;
    node.split_dim = Some(split.split_dim);
    node.split_value = Some(split.split_value);
    node.left = Some(left);
    node.right = Some(right);
    Ok(node_id)
}

/// One node of the balanced tree. Interior nodes below the flattening layer
/// are gone; flattening-layer nodes parent their singletons directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BmstNode {
    pub node_id: u32,
    pub depth: u32,
    pub point_ids: Vec<PointId>,
    pub children: Vec<u32>,
}

/// Balanced median split tree: uniform leaf depth, node ids in depth-major
/// order (layer by layer, left to right).
#[derive(Debug, Clone, PartialEq)]
pub struct Bmst {
    pub nodes: Vec<BmstNode>,
    /// Node ids per depth; the last layer is the singleton leaves.
    pub layers: Vec<Vec<u32>>,
    /// The flattening layer index i (smallest with floor(n/2^i) <= 3).
    pub flatten_depth: u32,
}

/// Smallest i such that floor(n / 2^i) <= 3.
pub fn flatten_depth(n: usize) -> u32 {
    let mut i = 0u32;
    while n >> i > 3 {
        i += 1;
    }
    i
}

/// Rebalances a median split tree so every leaf sits at the same depth.
pub fn balance_to_bmst(tree: &MstTree) -> Bmst {
    let n = tree.root().point_ids.len();
    let target = flatten_depth(n);

    // Single point: the root is the only node and the only leaf.
    if n == 1 {
        let root = BmstNode {
            node_id: 0,
            depth: 0,
            point_ids: tree.root().point_ids.clone(),
            children: Vec::new(),
        };
        return Bmst {
            nodes: vec![root],
            layers: vec![vec![0]],
            flatten_depth: 0,
        };
    }

    // Walk the tree breadth-first down to the flattening layer, then attach
    // each node's subtree singletons as direct children.
    let mut nodes: Vec<BmstNode> = Vec::new();
    let mut layers: Vec<Vec<u32>> = Vec::new();
    let mut frontier: Vec<u32> = vec![0]; // old ids at current depth
    let mut new_of_old: Vec<(u32, u32)> = Vec::new(); // (old, new) at current depth

    for depth in 0..=target {
        let mut layer = Vec::new();
        let mut next_frontier = Vec::new();
        let mut pairs = Vec::new();
        for &old_id in &frontier {
            let old = &tree.nodes[old_id as usize];
            let new_id = nodes.len() as u32;
            nodes.push(BmstNode {
                node_id: new_id,
                depth,
                point_ids: old.point_ids.clone(),
                children: Vec::new(),
            });
            layer.push(new_id);
            pairs.push((old_id, new_id));
            if depth < target {
                next_frontier.push(old.left.expect("interior above flattening layer"));
                next_frontier.push(old.right.expect("interior above flattening layer"));
            }
        }
        // Wire children of the previous layer: each parent produced exactly
        // two consecutive entries in this layer.
        if depth > 0 {
            for (i, &(_, new_id)) in pairs.iter().enumerate() {
                let parent = new_of_old[i / 2].1;
                nodes[parent as usize].children.push(new_id);
            }
        }
        new_of_old = pairs;
        frontier = next_frontier;
        layers.push(layer);
    }

    // Leaf layer: adopt subtree singletons in left-to-right order.
    let mut leaf_layer = Vec::new();
    for &(old_id, new_id) in &new_of_old {
        for leaf_old in subtree_leaves(tree, old_id) {
            let leaf_new = nodes.len() as u32;
            nodes.push(BmstNode {
                node_id: leaf_new,
                depth: target + 1,
                point_ids: tree.nodes[leaf_old as usize].point_ids.clone(),
                children: Vec::new(),
            });
            nodes[new_id as usize].children.push(leaf_new);
            leaf_layer.push(leaf_new);
        }
    }
    layers.push(leaf_layer);

    Bmst {
        nodes,
        layers,
        flatten_depth: target,
    }
}

fn subtree_leaves(tree: &MstTree, root: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let node = &tree.nodes[id as usize];
        match (node.left, node.right) {
            (None, None) => out.push(id),
            (Some(l), Some(r)) => {
                // Right first so the left subtree pops first.
                stack.push(r);
                stack.push(l);
            }
            _ => unreachable!("median split always produces two children"),
        }
    }
    out
}
