//! Sub-linear approximate k-nearest-neighbor search over a hierarchical
//! Delaunay graph.
//!
//! The index is a balanced median split tree: each node carries an
//! approximate minimum enclosing sphere of its points, and the nodes of
//! every depth layer are joined by the Delaunay triangulation of their
//! sphere centers. A query descends the tree toward the nearer child
//! center, walks the landing layer's triangulation to the locally nearest
//! center, then answers through radius-escalating (c,r)-kNN calls against a
//! pluggable backend (an exact scan, or multi-table locality-sensitive
//! hashing). Every answer is labeled with the guarantee it carries: sets
//! produced at escalation round zero target the recall criterion, later
//! rounds satisfy the distance criterion (every returned point within c of
//! the true k-th distance, deterministic with the exact backend).
//!
//! ```
//! use hdg::{build_index, gen_poisson, query, BuildParams, ExactBackend, QueryParams};
//!
//! let data = gen_poisson(512, 2, 1.0, 7).unwrap().with_jitter(1).unwrap();
//! let index = build_index(&data, BuildParams::default()).unwrap();
//! let backend = ExactBackend::new(&index.dataset);
//! let out = query(
//!     &index,
//!     &[0.5, 0.5],
//!     &QueryParams { k: 10, c: 2.0, delta: 0.8 },
//!     &backend,
//! )
//! .unwrap();
//! assert_eq!(out.result_ids.len(), 10);
//! ```

// Parameter guards are written as !(x > bound) so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod ames;
mod crknn;
mod dataset;
mod delaunay;
mod error;
mod exact;
mod index;
mod poisson;
mod query;
mod sphere;
mod split_tree;

pub use ames::{ames, AmesParams, DEFAULT_EPSILON};
pub use crknn::{
    collision_probability, derive_params, BackendAnswer, CrKnnBackend, ExactBackend, LshBackend,
    LshConfig, LshParams,
};
pub use dataset::{derive_seed, distance, Dataset, PointId, PointRef};
pub use delaunay::{
    build_delaunay, circumsphere, max_degree, verify_empty_sphere, DtGraph, DtVerifyReport,
    DtViolation, MAX_DIM,
};
pub use error::{HdgError, Result};
pub use exact::{exact_crknn, exact_knn, exact_mes, exact_mes_subset, KnnResult};
pub use index::{
    build_index, layer_delaunay, load_index, load_index_from_path, save_index,
    save_index_to_path, validate_index, BuildParams, CheckResult, Hdg, HdgNode, ValidationReport,
};
pub use poisson::gen_poisson;
pub use query::{answer, descend, navigate, query, GuaranteePath, QueryOutcome, QueryParams, QueryStats};
pub use sphere::Sphere;
pub use split_tree::{
    balance_to_bmst, build_mst, flatten_depth, mbb, median_split, Bmst, BmstNode, BoundingBox,
    MedianSplit, MstNode, MstTree,
};
