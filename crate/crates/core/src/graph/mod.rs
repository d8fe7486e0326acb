//! Directed, unweighted, attributed graphs stored as paired CSR indices.

mod io;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SparseMatrix};

pub use io::{
    load_graph, load_graph_remapped, load_graph_with, read_edge_csv, read_feature_csv, save_graph,
    write_edge_csv, write_feature_csv, IdMap, LoadOptions, Precision,
};

/// A directed edge `(source, target)`.
pub type Edge = (usize, usize);

/// Which incident edges define a node's neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMode {
    /// Sources of edges pointing at the node.
    In,
    /// Targets of edges leaving the node.
    Out,
    /// Union of in- and out-neighbors.
    #[default]
    Both,
}

impl FromStr for NeighborMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in" => Ok(NeighborMode::In),
            "out" => Ok(NeighborMode::Out),
            "both" => Ok(NeighborMode::Both),
            other => Err(Error::invalid(format!(
                "unknown neighbor mode `{other}` (expected in, out or both)"
            ))),
        }
    }
}

impl fmt::Display for NeighborMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborMode::In => "in",
            NeighborMode::Out => "out",
            NeighborMode::Both => "both",
        })
    }
}

/// Compressed adjacency: `targets[offsets[v]..offsets[v + 1]]` is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    /// `pairs` must be sorted and deduplicated.
    fn from_sorted_pairs(num_nodes: usize, pairs: impl Iterator<Item = Edge>) -> Self {
        let mut offsets = vec![0usize; num_nodes + 1];
        let mut targets = Vec::new();
        for (u, v) in pairs {
            offsets[u + 1] += 1;
            targets.push(v);
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        Csr { offsets, targets }
    }

    pub(crate) fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for list in lists {
            targets.extend(list);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn num_entries(&self) -> usize {
        self.targets.len()
    }
}

/// Node attributes. A graph loaded without a feature file carries implicit
/// one-hot identity features, which are never materialized densely.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Identity(usize),
    Dense(Matrix),
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense(m) => m.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense(m) => m.cols(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Features::Identity(_))
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Features::Identity(n) => Matrix::identity(*n),
            Features::Dense(m) => m.clone(),
        }
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            Features::Identity(n) => SparseMatrix::identity(*n),
            Features::Dense(m) => SparseMatrix::from_dense(m),
        }
    }
}

/// Immutable directed graph with node features. Node ids are `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    num_nodes: usize,
    out_adj: Csr,
    in_adj: Csr,
    features: Features,
}

impl DirectedGraph {
    /// Builds a graph, dropping self-loops and collapsing duplicate edges.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = Edge>,
        features: Features,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::FeatureRowCount {
                rows: features.rows(),
                num_nodes,
            });
        }
        if let Features::Dense(m) = &features {
            m.check_finite("node features")?;
        }
        let mut pairs = Vec::new();
        let mut self_loops = 0usize;
        for (u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                self_loops += 1;
            } else {
                pairs.push((u, v));
            }
        }
        if self_loops > 0 {
            log::info!("dropped {self_loops} self-loop(s)");
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        if pairs.len() < before {
            log::debug!("collapsed {} duplicate edge(s)", before - pairs.len());
        }
        let out_adj = Csr::from_sorted_pairs(num_nodes, pairs.iter().copied());
        let mut reversed: Vec<Edge> = pairs.iter().map(|&(u, v)| (v, u)).collect();
        reversed.sort_unstable();
        let in_adj = Csr::from_sorted_pairs(num_nodes, reversed.into_iter());
        Ok(DirectedGraph {
            num_nodes,
            out_adj,
            in_adj,
            features,
        })
    }

    /// Same nodes and features, different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        DirectedGraph::from_edges(self.num_nodes, edges, self.features.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.out_adj.num_entries()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn out_adj(&self) -> &Csr {
        &self.out_adj
    }

    pub fn in_adj(&self) -> &Csr {
        &self.in_adj
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        self.out_adj.neighbors(v)
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        self.in_adj.neighbors(v)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.out_adj.neighbors(u).binary_search(&v).is_ok()
    }

    /// All edges in `(source, target)` lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.num_nodes).flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v)))
    }

    pub fn edge_list(&self) -> Vec<Edge> {
        self.edges().collect()
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v < self.num_nodes {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                id: v,
                num_nodes: self.num_nodes,
            })
        }
    }

    /// Sorted 1-hop neighborhood of `v`, never containing `v` itself.
    pub fn neighborhood(&self, v: usize, mode: NeighborMode) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(self.neighbors_unchecked(v, mode))
    }

    fn neighbors_unchecked(&self, v: usize, mode: NeighborMode) -> Vec<usize> {
        match mode {
            NeighborMode::In => self.in_neighbors(v).to_vec(),
            NeighborMode::Out => self.out_neighbors(v).to_vec(),
            NeighborMode::Both => merge_sorted(self.in_neighbors(v), self.out_neighbors(v)),
        }
    }

    /// Nodes within `k` hops of `v` (BFS along `mode`), excluding `v`.
    pub fn k_hop(&self, v: usize, k: usize, mode: NeighborMode) -> Result<Vec<usize>> {
        self.check_node(v)?;
        if k == 0 {
            return Err(Error::invalid("k_hop depth must be at least 1"));
        }
        let mut depth = vec![usize::MAX; self.num_nodes];
        depth[v] = 0;
        let mut queue = VecDeque::from([v]);
        let mut found = Vec::new();
        while let Some(u) = queue.pop_front() {
            if depth[u] == k {
                continue;
            }
            for w in self.neighbors_unchecked(u, mode) {
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    found.push(w);
                    queue.push_back(w);
                }
            }
        }
        found.sort_unstable();
        Ok(found)
    }

    /// Per-node neighbor lists for message passing along `mode`.
    pub fn neighbor_lists(&self, mode: NeighborMode) -> Csr {
        match mode {
            NeighborMode::In => self.in_adj.clone(),
            NeighborMode::Out => self.out_adj.clone(),
            NeighborMode::Both => Csr::from_lists(
                (0..self.num_nodes)
                    .map(|v| self.neighbors_unchecked(v, NeighborMode::Both))
                    .collect(),
            ),
        }
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
