//! Point-cloud graphs (epsilon and symmetric k-NN) and their scaled graph
//! Laplacians `s (D - A)`.
//!
//! With uniform sampling on a `d`-dimensional manifold the scalings below
//! make the Laplacian approximate a weighted manifold Laplacian: the
//! epsilon scaling `(d+2) / (v_d n eps^(d+2))` and the k-NN scaling
//! `(d+2)/(v_d n) (n v_d / k)^(1+2/d)`, where `v_d` is the unit-ball volume.

mod kdtree;
mod sparse;

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::rng;

pub use kdtree::{dist2, KdTree};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Epsilon,
    Knn,
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphMode::Epsilon => "epsilon",
            GraphMode::Knn => "knn",
        })
    }
}

/// Default schedule multipliers on the sphere benchmark.
pub const DEFAULT_EPS_SCALE: f64 = 1.9;
pub const DEFAULT_KNN_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub mode: GraphMode,
    #[serde(default)]
    pub scale_c: Option<f64>,
    #[serde(default)]
    pub explicit_eps: Option<f64>,
    #[serde(default)]
    pub explicit_k: Option<usize>,
    pub intrinsic_dim: usize,
}

/// Keys accepted in graph JSON, for diagnostics.
pub const GRAPH_KEYS: &[&str] = &["mode", "scale_c", "explicit_eps", "explicit_k", "intrinsic_dim"];

/// The resolved construction parameter for one build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphParam {
    Eps(f64),
    K(usize),
}

impl GraphParam {
    pub fn as_f64(&self) -> f64 {
        match *self {
            GraphParam::Eps(e) => e,
            GraphParam::K(k) => k as f64,
        }
    }

    pub fn mode(&self) -> GraphMode {
        match self {
            GraphParam::Eps(_) => GraphMode::Epsilon,
            GraphParam::K(_) => GraphMode::Knn,
        }
    }
}

impl GraphConfig {
    pub fn epsilon(intrinsic_dim: usize) -> Self {
        Self {
            mode: GraphMode::Epsilon,
            scale_c: None,
            explicit_eps: None,
            explicit_k: None,
            intrinsic_dim,
        }
    }

    pub fn knn(intrinsic_dim: usize) -> Self {
        Self {
            mode: GraphMode::Knn,
            ..Self::epsilon(intrinsic_dim)
        }
    }

    pub fn with_scale(mut self, c: f64) -> Self {
        self.scale_c = Some(c);
        self
    }

    /// The multiplier actually used by the schedule.
    pub fn effective_scale(&self) -> f64 {
        self.scale_c.unwrap_or(match self.mode {
            GraphMode::Epsilon => DEFAULT_EPS_SCALE,
            GraphMode::Knn => DEFAULT_KNN_SCALE,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 {
            return Err(Error::Config("intrinsic_dim must be positive".into()));
        }
        if let Some(c) = self.scale_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("scale_c must be positive, got {c}")));
            }
        }
        match self.mode {
            GraphMode::Epsilon => {
                if self.explicit_k.is_some() {
                    return Err(Error::Config("explicit_k given for an epsilon graph".into()));
                }
                if let Some(e) = self.explicit_eps {
                    if !(e > 0.0 && e.is_finite()) {
                        return Err(Error::Config(format!("explicit_eps must be positive, got {e}")));
                    }
                }
            }
            GraphMode::Knn => {
                if self.explicit_eps.is_some() {
                    return Err(Error::Config("explicit_eps given for a k-NN graph".into()));
                }
                if self.explicit_k == Some(0) {
                    return Err(Error::Config("explicit_k must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Radius or neighbor count for a cloud of `n` points: the explicit
    /// value when set, the schedule otherwise.
    pub fn resolve(&self, n: usize) -> Result<GraphParam> {
        self.validate()?;
        let c = self.effective_scale();
        Ok(match self.mode {
            GraphMode::Epsilon => GraphParam::Eps(match self.explicit_eps {
                Some(e) => e,
                None => eps_schedule(n, self.intrinsic_dim, c)?,
            }),
            GraphMode::Knn => GraphParam::K(match self.explicit_k {
                Some(k) => k,
                None => knn_schedule(n, self.intrinsic_dim, c)?,
            }),
        })
    }
}

fn check_schedule_args(n: usize, d: usize, c: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("schedule needs n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("intrinsic dimension must be positive".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
    }
    Ok(())
}

/// `c (log n / n)^(1/(d+4))`. `n` is real-valued so that e.g. `n = e` works.
pub fn eps_schedule_real(n: f64, d: usize, c: f64) -> f64 {
    c * (n.ln() / n).powf(1.0 / (d as f64 + 4.0))
}

pub fn eps_schedule(n: usize, d: usize, c: f64) -> Result<f64> {
    check_schedule_args(n, d, c)?;
    Ok(eps_schedule_real(n as f64, d, c))
}

/// `round(c log(n)^(d/(d+4)) n^(4/(d+4)))`, clamped to `[1, n-1]`.
pub fn knn_schedule(n: usize, d: usize, c: f64) -> Result<usize> {
    check_schedule_args(n, d, c)?;
    let nf = n as f64;
    let df = d as f64;
    let raw = c * nf.ln().powf(df / (df + 4.0)) * nf.powf(4.0 / (df + 4.0));
    Ok((raw.round() as usize).clamp(1, n - 1))
}

/// Volume of the unit ball in `R^d`, `pi^(d/2) / Gamma(d/2 + 1)`, via the
/// recurrence `v_d = 2 pi / d * v_(d-2)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Laplacian scaling constant for the given construction.
pub fn laplacian_scale(param: GraphParam, n: usize, d: usize) -> f64 {
    let vd = unit_ball_volume(d);
    let nf = n as f64;
    let df = d as f64;
    match param {
        GraphParam::Eps(eps) => (df + 2.0) / (vd * nf * eps.powf(df + 2.0)),
        GraphParam::K(k) => (df + 2.0) / (vd * nf) * (nf * vd / k as f64).powf(1.0 + 2.0 / df),
    }
}

/// Unweighted undirected graph with symmetric adjacency and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl SparseGraph {
    /// Builds from an edge list; duplicates and orientation are normalized.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {i}")));
            }
            lists[i].push(j);
            lists[j].push(i);
        }
        Ok(Self::from_lists(lists))
    }

    fn from_lists(mut lists: Vec<Vec<usize>>) -> Self {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Self { n, offsets, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.neighbors(i)
                .iter()
                .all(|&j| j != i && self.neighbors(j).binary_search(&i).is_ok())
        })
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Epsilon graph: edge `{i, j}` iff `i != j` and `|x_i - x_j| < eps`.
pub fn build_eps_graph(cloud: &PointCloud, eps: f64) -> Result<SparseGraph> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let tree = KdTree::build(cloud);
    let radius2 = eps * eps;
    let lists: Vec<Vec<usize>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| tree.within(i, radius2))
        .collect();
    Ok(symmetrize(lists))
}

/// Symmetric k-NN graph: `{i, j}` is an edge when either point is among the
/// other's `k` nearest. Distance ties go to the lower index.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<SparseGraph> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={}, got {k}", n.saturating_sub(1))));
    }
    let tree = KdTree::build(cloud);
    let lists: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| tree.nearest(i, k)).collect();
    Ok(symmetrize(lists))
}

/// Union of each directed list with its transpose.
fn symmetrize(directed: Vec<Vec<usize>>) -> SparseGraph {
    let mut lists = directed.clone();
    for (i, list) in directed.iter().enumerate() {
        for &j in list {
            lists[j].push(i);
        }
    }
    SparseGraph::from_lists(lists)
}

/// Brute-force epsilon graph, O(n^2). Reference for the spatial index.
pub fn brute_force_eps_graph(cloud: &PointCloud, eps: f64) -> SparseGraph {
    let radius2 = eps * eps;
    let n = cloud.len();
    let lists = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && dist2(cloud.point(i), cloud.point(j)) < radius2)
                .collect()
        })
        .collect();
    symmetrize(lists)
}

/// Brute-force symmetric k-NN graph with `(distance, index)` ordering.
pub fn brute_force_knn_graph(cloud: &PointCloud, k: usize) -> SparseGraph {
    let n = cloud.len();
    let lists = (0..n)
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist2(cloud.point(i), cloud.point(j)), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    symmetrize(lists)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connectivity {
    pub connected: bool,
    pub component_count: usize,
}

/// Breadth-first component count.
pub fn check_connected(graph: &SparseGraph) -> Connectivity {
    let n = graph.n();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        components += 1;
        seen[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for &u in graph.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    Connectivity {
        connected: components <= 1,
        component_count: components,
    }
}

/// `s (D - A)` stored in CSR form with its scaling constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: CsrMatrix,
    scaling_s: f64,
    param: Option<GraphParam>,
}

impl GraphLaplacian {
    /// `s (D - A)` for an arbitrary positive scale.
    pub fn with_scale(graph: &SparseGraph, scaling_s: f64) -> Result<Self> {
        if !(scaling_s > 0.0 && scaling_s.is_finite()) {
            return Err(Error::InvalidArgument(format!("Laplacian scale must be positive, got {scaling_s}")));
        }
        let rows = (0..graph.n())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = graph.neighbors(i).iter().map(|&j| (j, -scaling_s)).collect();
                row.push((i, scaling_s * graph.degree(i) as f64));
                row
            })
            .collect();
        Ok(Self {
            matrix: CsrMatrix::from_rows(rows),
            scaling_s,
            param: None,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn scaling(&self) -> f64 {
        self.scaling_s
    }

    pub fn param(&self) -> Option<GraphParam> {
        self.param
    }

    pub fn mode(&self) -> Option<GraphMode> {
        self.param.map(|p| p.mode())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mul_vec(x)
    }

    /// Stable hash of structure and values; seeds iterative solvers.
    pub fn fingerprint(&self) -> u64 {
        let mut words = vec![self.n() as u64, self.matrix.nnz() as u64, self.scaling_s.to_bits()];
        words.extend(self.matrix.col_indices().iter().map(|&c| c as u64));
        words.extend(self.matrix.values().iter().map(|v| v.to_bits()));
        rng::hash_words(&words)
    }

    /// Checks symmetry, the constant kernel vector and a Gershgorin
    /// certificate of positive semidefiniteness.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.matrix.is_symmetric() {
            return Err(Error::InvalidArgument("Laplacian is not symmetric".into()));
        }
        let n = self.n();
        let ones = vec![1.0; n];
        let l1 = self.matrix.mul_vec(&ones)?;
        let max_diag = (0..n).map(|i| self.matrix.get(i, i)).fold(0.0, f64::max);
        let kernel_resid = l1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if kernel_resid > 1e-10 * max_diag.max(self.scaling_s) {
            return Err(Error::InvalidArgument(format!("constant vector residual {kernel_resid:e}")));
        }
        for i in 0..n {
            let (diag, off) = self.matrix.row(i).fold((0.0, 0.0), |(d, o), (j, v)| {
                if j == i {
                    (d + v, o)
                } else {
                    (d, o + v.abs())
                }
            });
            if diag < 0.0 || diag + 1e-12 * diag.abs().max(1.0) < off {
                return Err(Error::InvalidArgument(format!("row {i} is not diagonally dominant")));
            }
        }
        Ok(())
    }
}

/// Builds the scaled Laplacian of `graph` for the construction `param`.
pub fn assemble_laplacian(
    graph: &SparseGraph,
    config: &GraphConfig,
    n: usize,
    d: usize,
    param: GraphParam,
) -> Result<GraphLaplacian> {
    if graph.n() != n {
        return Err(Error::Config(format!("graph has {} vertices but n = {n}", graph.n())));
    }
    if config.intrinsic_dim != d {
        return Err(Error::Config(format!(
            "intrinsic dimension mismatch: config {} vs cloud {d}",
            config.intrinsic_dim
        )));
    }
    if param.mode() != config.mode {
        return Err(Error::Config(format!("parameter for {} graph used with {} config", param.mode(), config.mode)));
    }
    let mut lap = GraphLaplacian::with_scale(graph, laplacian_scale(param, n, d))?;
    lap.param = Some(param);
    Ok(lap)
}

/// A graph, its Laplacian, and the metadata recorded in reports.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: SparseGraph,
    pub laplacian: GraphLaplacian,
    pub param: GraphParam,
    pub connectivity: Connectivity,
}

impl BuiltGraph {
    pub fn build(cloud: &PointCloud, config: &GraphConfig) -> Result<Self> {
        if config.intrinsic_dim != cloud.intrinsic_dim() {
            return Err(Error::Config(format!(
                "intrinsic dimension mismatch: config {} vs cloud {}",
                config.intrinsic_dim,
                cloud.intrinsic_dim()
            )));
        }
        let param = config.resolve(cloud.len())?;
        let graph = match param {
            GraphParam::Eps(eps) => build_eps_graph(cloud, eps)?,
            GraphParam::K(k) => build_knn_graph(cloud, k)?,
        };
        let laplacian = assemble_laplacian(&graph, config, cloud.len(), cloud.intrinsic_dim(), param)?;
        debug_assert!(laplacian.check_invariants().is_ok());
        let connectivity = check_connected(&graph);
        Ok(Self {
            graph,
            laplacian,
            param,
            connectivity,
        })
    }

    pub fn sidecar(&self) -> GraphSidecar {
        GraphSidecar {
            n: self.graph.n(),
            mode: self.param.mode(),
            eps_or_k: self.param.as_f64(),
            scaling_s: self.laplacian.scaling(),
            edges: self.graph.edge_count(),
            connected: self.connectivity.connected,
            component_count: self.connectivity.component_count,
        }
    }
}

/// JSON metadata written next to an edge-list dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub n: usize,
    pub mode: GraphMode,
    pub eps_or_k: f64,
    pub scaling_s: f64,
    pub edges: usize,
    pub connected: bool,
    pub component_count: usize,
}
