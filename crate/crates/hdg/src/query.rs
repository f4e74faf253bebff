//! Query execution: descend the tree toward the query, greedily navigate
//! the layer triangulation to the locally nearest center, then answer with
//! radius-escalating (c,r)-kNN calls.
//!
//! The escalation starts at (D(q, center) + radius) / n for the landing
//! node's sphere and multiplies by c each round. A result from round 0
//! carries the recall guarantee; a result from any later round carries the
//! distance guarantee: with the exact backend, an Empty at round i-1 proves
//! fewer than k points lie within c*r_{i-1}, so the k-th true distance
//! exceeds that and everything returned at round i (within c*r_i = c^2 *
//! r_{i-1}) is within c of it. The loop is capped at ceil(log_c n) rounds
//! plus one final call at the full sphere bound, which the exact backend
//! provably answers; a probabilistic backend that still comes up empty
//! falls back to one exact scan, flagged in the stats.

use crate::crknn::{CrKnnBackend, ExactBackend};
use crate::dataset::{dist, dist_sq, PointId};
use crate::error::{HdgError, Result};
use crate::index::Hdg;

/// Query-time parameters. `delta` is the recall target used for reporting;
/// the search itself never branches on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
}

impl QueryParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(HdgError::invalid(format!(
                "k = {} out of range 1..={n}",
                self.k
            )));
        }
        if !(self.c > 1.0) {
            return Err(HdgError::invalid("approximation factor c must exceed 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HdgError::invalid("delta must lie in (0,1)"));
        }
        Ok(())
    }
}

/// Which guarantee the returned set carries, decided solely by the loop
/// index of the answering round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuaranteePath {
    /// Answered at round 0: the recall guarantee applies (probabilistic).
    Recall,
    /// Answered at a later round: the distance guarantee applies.
    Distance,
}

impl GuaranteePath {
    pub fn from_loop_index(i: u32) -> Self {
        if i == 0 {
            GuaranteePath::Recall
        } else {
            GuaranteePath::Distance
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryStats {
    /// Nodes entered during descent, root included.
    pub descent_visits: u32,
    /// Nodes entered during navigation, start included.
    pub navigation_visits: u32,
    pub backend_calls: u32,
    pub candidates_scanned: u64,
    /// True when every backend call came up empty and one exact scan
    /// produced the result instead.
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub result_ids: Vec<PointId>,
    pub return_loop_index: u32,
    pub guarantee_path: GuaranteePath,
    pub stats: QueryStats,
}

/// Walks from the root toward q, always into the child with the nearer
/// sphere center, stopping at the first node holding at most 2k points.
/// Binary ties go to the right child; at flattened layers with more
/// children the nearest center wins with ties to the smaller node id.
pub fn descend(hdg: &Hdg, q: &[f64], k: usize) -> (u32, u32) {
    let mut node = hdg.root();
    let mut visits = 1u32;
    while node.point_ids.len() > 2 * k && !node.children.is_empty() {
        let next = if node.children.len() == 2 {
            let left = hdg.node(node.children[0]);
            let right = hdg.node(node.children[1]);
            if dist_sq(q, &left.sphere.center) < dist_sq(q, &right.sphere.center) {
                left.node_id
            } else {
                right.node_id
            }
        } else {
            let mut best = (f64::INFINITY, u32::MAX);
            for &ch in &node.children {
                let d = dist_sq(q, &hdg.node(ch).sphere.center);
                if d < best.0 {
                    best = (d, ch);
                }
            }
            best.1
        };
        node = hdg.node(next);
        visits += 1;
    }
    (node.node_id, visits)
}

/// Greedy descent on the layer triangulation: move to the neighbor with the
/// strictly nearest center while one improves on the current node. The
/// distance to q strictly decreases every step, so this terminates at a
/// local minimum without revisiting.
pub fn navigate(hdg: &Hdg, start: u32, q: &[f64]) -> (u32, u32) {
    let mut node = hdg.node(start);
    let mut current = dist_sq(q, &node.sphere.center);
    let mut visits = 1u32;
    loop {
        let mut best = (current, node.node_id);
        for &nb in &node.graph_neighbors {
            let d = dist_sq(q, &hdg.node(nb).sphere.center);
            if d < best.0 {
                best = (d, nb);
            }
        }
        if best.1 == node.node_id {
            return (node.node_id, visits);
        }
        node = hdg.node(best.1);
        current = best.0;
        visits += 1;
    }
}

/// Radius-escalating backend calls from the landing node.
pub fn answer(
    hdg: &Hdg,
    node_id: u32,
    q: &[f64],
    params: &QueryParams,
    backend: &dyn CrKnnBackend,
    stats: &mut QueryStats,
) -> Result<(Vec<PointId>, u32)> {
    let node = hdg.node(node_id);
    let n = hdg.n_points();
    let sphere_bound = dist(q, &node.sphere.center) + node.sphere.radius;
    let rounds = if n > 1 {
        ((n as f64).ln() / params.c.ln()).ceil() as u32
    } else {
        0
    };

    let mut r = sphere_bound / n as f64;
    for i in 0..=rounds {
        let reply = backend.answer(q, params.k, params.c, r)?;
        stats.backend_calls += 1;
        stats.candidates_scanned += reply.candidates_scanned;
        if let Some(ids) = reply.ids {
            return Ok((ids, i));
        }
        r *= params.c;
    }

    // Safety net: the ball of radius D(q,center)+radius holds all of the
    // node's >= k points, so this call cannot fail with the exact backend.
    let reply = backend.answer(q, params.k, params.c, sphere_bound)?;
    stats.backend_calls += 1;
    stats.candidates_scanned += reply.candidates_scanned;
    if let Some(ids) = reply.ids {
        return Ok((ids, rounds + 1));
    }

    // A probabilistic backend exhausted every chance; fall back to one
    // exact scan.
    stats.fallback_used = true;
    let exact = ExactBackend::new(&hdg.dataset);
    let reply = exact.answer(q, params.k, params.c, sphere_bound)?;
    stats.backend_calls += 1;
    stats.candidates_scanned += reply.candidates_scanned;
    reply
        .ids
        .map(|ids| (ids, rounds + 1))
        .ok_or_else(|| HdgError::Internal("exact fallback found fewer than k points".into()))
}

/// Full query: descend, navigate, answer.
pub fn query(
    hdg: &Hdg,
    q: &[f64],
    params: &QueryParams,
    backend: &dyn CrKnnBackend,
) -> Result<QueryOutcome> {
    if q.len() != hdg.dim() {
        return Err(HdgError::invalid(format!(
            "query has {} coordinates, index is {}-dimensional",
            q.len(),
            hdg.dim()
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(HdgError::invalid("non-finite query coordinate"));
    }
    params.validate(hdg.n_points())?;

    let mut stats = QueryStats::default();
    let (landing, descent_visits) = descend(hdg, q, params.k);
    stats.descent_visits = descent_visits;
    let (local_min, nav_visits) = navigate(hdg, landing, q);
    stats.navigation_visits = nav_visits;
    let (result_ids, return_loop_index) =
        answer(hdg, local_min, q, params, backend, &mut stats)?;
    Ok(QueryOutcome {
        result_ids,
        return_loop_index,
        guarantee_path: GuaranteePath::from_loop_index(return_loop_index),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{derive_seed, Dataset};
    use crate::exact::exact_knn;
    use crate::index::{build_index, BuildParams};
    use crate::poisson::gen_poisson;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poisson_index(n: usize, dim: usize, seed: u64) -> Hdg {
        let ds = gen_poisson(n, dim, 1.0, seed)
            .unwrap()
            .with_jitter(derive_seed(seed, 1))
            .unwrap();
        build_index(
            &ds,
            BuildParams {
                epsilon: 0.1,
                algo_seed: derive_seed(seed, 2),
            },
        )
        .unwrap()
    }

    #[test]
    fn descend_returns_root_for_small_sets() {
        let hdg = poisson_index(16, 2, 1);
        let (node, visits) = descend(&hdg, &[0.5, 0.5], 8); // n <= 2k
        assert_eq!(node, 0);
        assert_eq!(visits, 1);
    }

    #[test]
    fn descend_follows_closer_centers() {
        let hdg = poisson_index(8, 2, 2);
        let q = [0.01, 0.02];
        let (node, _) = descend(&hdg, &q, 1);
        let landed = hdg.node(node);
        assert!(landed.point_ids.len() <= 2);
        // Exhaustive check along the path: every step went to the nearer of
        // the two children.
        let mut current = hdg.root();
        while current.point_ids.len() > 2 && !current.children.is_empty() {
            let l = hdg.node(current.children[0]);
            let r = hdg.node(current.children[1]);
            let next = if dist(&q, &l.sphere.center) < dist(&q, &r.sphere.center) {
                l
            } else {
                r
            };
            current = next;
        }
        assert_eq!(current.node_id, node);
    }

    #[test]
    fn descend_stop_layer_size_band() {
        let hdg = poisson_index(1024, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let (node, _) = descend(&hdg, &q, 10);
            let landed = hdg.node(node);
            // First layer whose node size drops to <= 2k; with n = 1024 and
            // k = 10 that is size 16 at depth 6, and k <= 16 < 2k.
            assert_eq!(landed.point_ids.len(), 16);
            assert_eq!(landed.depth, 6);
        }
    }

    #[test]
    fn descend_handles_multiway_flattened_layer() {
        // n = 12: floor(12/4) = 3, so the flattening layer is depth 2 with
        // 3-point nodes; k = 1 forces descent through a 3-way split.
        let hdg = poisson_index(12, 2, 5);
        let (node, _) = descend(&hdg, &[0.3, 0.3], 1);
        let landed = hdg.node(node);
        assert!(landed.point_ids.len() <= 2);
    }

    #[test]
    fn navigate_fixed_point() {
        let hdg = poisson_index(256, 2, 6);
        // The global nearest center in the landing layer is a fixed point.
        let q = [0.5, 0.5];
        let (start, _) = descend(&hdg, &q, 10);
        let (end, _) = navigate(&hdg, start, &q);
        let (again, visits) = navigate(&hdg, end, &q);
        assert_eq!(end, again);
        assert_eq!(visits, 1);
    }

    #[test]
    fn navigate_reaches_local_minimum() {
        let hdg = poisson_index(1024, 2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let (start, _) = descend(&hdg, &q, 5);
            let (end, visits) = navigate(&hdg, start, &q);
            let node = hdg.node(end);
            let d_end = dist(&q, &node.sphere.center);
            assert!(d_end <= dist(&q, &hdg.node(start).sphere.center));
            for &nb in &node.graph_neighbors {
                assert!(dist(&q, &hdg.node(nb).sphere.center) >= d_end);
            }
            let layer_size = hdg.layers[node.depth as usize].len() as u32;
            assert!(visits <= layer_size);
        }
    }

    #[test]
    fn navigate_walks_a_monotone_chain() {
        // Four colinear clusters; a query beyond one end pulls navigation
        // across the whole chain.
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in 0..2 {
                rows.push(vec![i as f64, 0.1 * j as f64]);
            }
        }
        let ds = Dataset::from_rows(2, &rows).unwrap().with_jitter(9).unwrap();
        let hdg = build_index(&ds, BuildParams::default()).unwrap();
        // Depth-1 layer has 2 nodes, depth-2 has 4 (pairs along the line).
        let layer = &hdg.layers[2];
        assert_eq!(layer.len(), 4);
        let q = [10.0, 0.0];
        let far_start = *layer
            .iter()
            .max_by(|&&a, &&b| {
                dist(&q, &hdg.node(a).sphere.center)
                    .total_cmp(&dist(&q, &hdg.node(b).sphere.center))
            })
            .unwrap();
        let (end, visits) = navigate(&hdg, far_start, &q);
        let best = *layer
            .iter()
            .min_by(|&&a, &&b| {
                dist(&q, &hdg.node(a).sphere.center)
                    .total_cmp(&dist(&q, &hdg.node(b).sphere.center))
            })
            .unwrap();
        assert_eq!(end, best);
        assert!(visits >= 2);
    }

    #[test]
    fn query_single_point() {
        let ds = Dataset::from_rows(2, &[vec![0.3, 0.4]]).unwrap();
        let hdg = build_index(&ds, BuildParams::default()).unwrap();
        let backend = ExactBackend::new(&hdg.dataset);
        let out = query(
            &hdg,
            &[0.9, 0.9],
            &QueryParams {
                k: 1,
                c: 2.0,
                delta: 0.5,
            },
            &backend,
        )
        .unwrap();
        assert_eq!(out.result_ids, vec![0]);
    }

    #[test]
    fn query_at_data_point_returns_it() {
        let hdg = poisson_index(128, 2, 10);
        let target = hdg.dataset.point(17).to_vec();
        let backend = ExactBackend::new(&hdg.dataset);
        let out = query(
            &hdg,
            &target,
            &QueryParams {
                k: 1,
                c: 2.0,
                delta: 0.5,
            },
            &backend,
        )
        .unwrap();
        assert_eq!(out.result_ids, vec![17]);
    }

    #[test]
    fn distance_guarantee_with_exact_backend() {
        let hdg = poisson_index(256, 2, 11);
        let backend = ExactBackend::new(&hdg.dataset);
        let params = QueryParams {
            k: 5,
            c: 1.5,
            delta: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut later_rounds = 0;
        for _ in 0..200 {
            let q = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let out = query(&hdg, &q, &params, &backend).unwrap();
            assert_eq!(out.result_ids.len(), 5);
            assert!(!out.stats.fallback_used);
            let truth = exact_knn(&hdg.dataset, &q, 5).unwrap();
            if out.return_loop_index > 0 {
                later_rounds += 1;
                assert_eq!(out.guarantee_path, GuaranteePath::Distance);
                let worst = out
                    .result_ids
                    .iter()
                    .map(|&id| dist(&q, hdg.dataset.point(id)))
                    .fold(0.0_f64, f64::max);
                // Exact inequality, no tolerance.
                assert!(worst <= params.c * truth.kth_distance);
            } else {
                assert_eq!(out.guarantee_path, GuaranteePath::Recall);
                let hits = out
                    .result_ids
                    .iter()
                    .filter(|id| truth.ids.contains(id))
                    .count();
                assert!(hits <= 5);
            }
        }
        assert!(later_rounds > 0, "expected some distance-path returns");
    }

    #[test]
    fn result_is_k_distinct_ids() {
        let hdg = poisson_index(512, 3, 13);
        let backend = ExactBackend::new(&hdg.dataset);
        let params = QueryParams {
            k: 8,
            c: 2.0,
            delta: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let out = query(&hdg, &q, &params, &backend).unwrap();
            let mut ids = out.result_ids.clone();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 8);
            assert!(ids.iter().all(|&id| (id as usize) < 512));
        }
    }

    #[test]
    fn repeated_queries_identical() {
        let hdg = poisson_index(256, 2, 15);
        let backend = ExactBackend::new(&hdg.dataset);
        let params = QueryParams {
            k: 3,
            c: 1.5,
            delta: 0.5,
        };
        let q = [0.42, 0.24];
        let a = query(&hdg, &q, &params, &backend).unwrap();
        let b = query(&hdg, &q, &params, &backend).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn escalation_steps_by_factor_c() {
        // The first radius is (D(q,center)+radius)/n exactly and each later
        // round multiplies by c; reproduce the schedule and compare against
        // a recording backend.
        struct Recorder<'a> {
            inner: ExactBackend<'a>,
            radii: std::sync::Mutex<Vec<f64>>,
        }
        impl CrKnnBackend for Recorder<'_> {
            fn name(&self) -> &'static str {
                "recorder"
            }
            fn answer(&self, q: &[f64], k: usize, c: f64, r: f64) -> Result<BackendAnswer> {
                self.radii.lock().unwrap().push(r);
                self.inner.answer(q, k, c, r)
            }
        }
        use crate::crknn::BackendAnswer;

        let hdg = poisson_index(128, 2, 16);
        let backend = Recorder {
            inner: ExactBackend::new(&hdg.dataset),
            radii: std::sync::Mutex::new(Vec::new()),
        };
        let params = QueryParams {
            k: 2,
            c: 1.7,
            delta: 0.5,
        };
        let q = [0.9, 0.1];
        let out = query(&hdg, &q, &params, &backend).unwrap();
        let radii = backend.radii.lock().unwrap().clone();
        assert_eq!(radii.len() as u32, out.stats.backend_calls);

        let (landing, _) = descend(&hdg, &q, params.k);
        let (local_min, _) = navigate(&hdg, landing, &q);
        let node = hdg.node(local_min);
        let mut expect = (dist(&q, &node.sphere.center) + node.sphere.radius) / 128.0;
        for &r in &radii {
            assert_eq!(r, expect);
            expect *= params.c;
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let hdg = poisson_index(32, 2, 17);
        let backend = ExactBackend::new(&hdg.dataset);
        let bad = [
            QueryParams { k: 0, c: 2.0, delta: 0.5 },
            QueryParams { k: 33, c: 2.0, delta: 0.5 },
            QueryParams { k: 1, c: 1.0, delta: 0.5 },
            QueryParams { k: 1, c: 2.0, delta: 1.0 },
        ];
        for params in bad {
            assert!(query(&hdg, &[0.5, 0.5], &params, &backend).is_err());
        }
        assert!(query(
            &hdg,
            &[0.5],
            &QueryParams { k: 1, c: 2.0, delta: 0.5 },
            &backend
        )
        .is_err());
    }
}
