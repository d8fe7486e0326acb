//! Directed edge splits and negative sampling.
//!
//! Held-out positives are removed per directed edge: holding out `(u, v)`
//! leaves a reciprocal `(v, u)` in the training graph. Evaluation negatives
//! are drawn once, against the original edge set, and frozen with the split.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{read_edge_csv, read_feature_csv, write_edge_csv, write_feature_csv};
use crate::graph::{DirectedGraph, Edge, Features, Precision};
use crate::rng::{stream_rng, Rng, Stream, RNG_ALGORITHM};

pub const MIN_SPLIT_EDGES: usize = 20;
pub const DEFAULT_VAL_FRAC: f64 = 0.05;
pub const DEFAULT_TEST_FRAC: f64 = 0.10;

/// Below this fraction of free ordered pairs, negatives are drawn by
/// enumerating the complement instead of by rejection.
const DENSE_FREE_FRACTION: f64 = 0.05;

pub const SPLIT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub train_graph: DirectedGraph,
    pub val_pos: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub test_neg: Vec<Edge>,
    pub seed: u64,
    pub val_frac: f64,
    pub test_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val_pos: usize,
    pub val_neg: usize,
    pub test_pos: usize,
    pub test_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub format_version: u32,
    pub seed: u64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub rng_algorithm: String,
    pub num_nodes: usize,
    /// `identity` when no feature file was supplied, otherwise `file`.
    pub features: String,
    pub feature_dim: usize,
    pub counts: SplitCounts,
}

/// `floor(frac · m)`, with a small tolerance so that e.g. `0.05 · 100` is 5.
pub fn held_out_count(frac: f64, num_edges: usize) -> usize {
    (frac * num_edges as f64 + 1e-9).floor() as usize
}

pub fn split_edges(
    g: &DirectedGraph,
    val_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<EdgeSplit> {
    let valid = |f: f64| f.is_finite() && f >= 0.0;
    if !valid(val_frac)
        || !valid(test_frac)
        || !(val_frac + test_frac > 0.0 && val_frac + test_frac < 1.0)
    {
        return Err(Error::invalid(format!(
            "split fractions val={val_frac} test={test_frac} must be non-negative with a sum in (0, 1)"
        )));
    }
    let m = g.num_edges();
    if m < MIN_SPLIT_EDGES {
        return Err(Error::GraphTooSmall(format!(
            "{m} edges, at least {MIN_SPLIT_EDGES} required"
        )));
    }
    let n_val = held_out_count(val_frac, m);
    let n_test = held_out_count(test_frac, m);
    if (val_frac > 0.0 && n_val == 0) || (test_frac > 0.0 && n_test == 0) {
        return Err(Error::GraphTooSmall(format!(
            "{m} edges give an empty validation or test set"
        )));
    }

    let mut edges = g.edge_list();
    edges.shuffle(&mut stream_rng(seed, Stream::Split));
    let mut test_pos = edges[..n_test].to_vec();
    let mut val_pos = edges[n_test..n_test + n_val].to_vec();
    let train = &edges[n_test + n_val..];
    test_pos.sort_unstable();
    val_pos.sort_unstable();
    let train_graph = g.with_edges(train.iter().copied())?;

    let val_neg = draw_negatives(g, n_val, &[], &mut stream_rng(seed, Stream::ValNegatives))?;
    let test_neg = draw_negatives(
        g,
        n_test,
        &val_neg,
        &mut stream_rng(seed, Stream::TestNegatives),
    )?;

    Ok(EdgeSplit {
        train_graph,
        val_pos,
        val_neg,
        test_pos,
        test_neg,
        seed,
        val_frac,
        test_frac,
    })
}

/// Uniformly samples `count` distinct ordered pairs `(u, v)`, `u ≠ v`, that
/// are neither edges of `g` nor listed in `exclude`.
pub fn sample_negatives(
    g: &DirectedGraph,
    count: usize,
    exclude: &[Edge],
    seed: u64,
) -> Result<Vec<Edge>> {
    draw_negatives(g, count, exclude, &mut stream_rng(seed, Stream::Negatives))
}

/// One fresh negative per positive, seeded by `(seed, epoch)`.
pub fn epoch_negatives(
    train_graph: &DirectedGraph,
    pos_batch: &[Edge],
    seed: u64,
    epoch: u64,
) -> Result<Vec<Edge>> {
    draw_negatives(
        train_graph,
        pos_batch.len(),
        &[],
        &mut stream_rng(seed, Stream::EpochNegatives { epoch }),
    )
}

fn draw_negatives(
    g: &DirectedGraph,
    count: usize,
    exclude: &[Edge],
    rng: &mut Rng,
) -> Result<Vec<Edge>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = g.num_nodes();
    let excluded: HashSet<Edge> = exclude
        .iter()
        .copied()
        .filter(|&(u, v)| u < n && v < n && u != v && !g.has_edge(u, v))
        .collect();
    let pairs = n * n.saturating_sub(1);
    let available = pairs - g.num_edges() - excluded.len();
    if count > available {
        return Err(Error::InsufficientNonEdges {
            requested: count,
            available,
        });
    }
    let is_free = |u: usize, v: usize| u != v && !g.has_edge(u, v) && !excluded.contains(&(u, v));

    if (available as f64) < DENSE_FREE_FRACTION * pairs as f64 {
        let mut free: Vec<Edge> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| is_free(u, v))
            .collect();
        let (picked, _) = free.partial_shuffle(rng, count);
        return Ok(picked.to_vec());
    }

    let budget = 1_000 + 100 * count;
    let mut out = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        if attempts == budget {
            return Err(Error::RejectionBudgetExceeded { attempts });
        }
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if is_free(u, v) && seen.insert((u, v)) {
            out.push((u, v));
        }
    }
    Ok(out)
}

impl EdgeSplit {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train_graph.num_edges(),
            val_pos: self.val_pos.len(),
            val_neg: self.val_neg.len(),
            test_pos: self.test_pos.len(),
            test_neg: self.test_neg.len(),
        }
    }

    pub fn meta(&self) -> SplitMeta {
        let features = self.train_graph.features();
        SplitMeta {
            format_version: SPLIT_FORMAT_VERSION,
            seed: self.seed,
            val_frac: self.val_frac,
            test_frac: self.test_frac,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            num_nodes: self.train_graph.num_nodes(),
            features: if features.is_identity() {
                "identity"
            } else {
                "file"
            }
            .to_string(),
            feature_dim: features.dim(),
            counts: self.counts(),
        }
    }

    /// Writes `train_edges.csv`, `val_pos.csv`, `val_neg.csv`, `test_pos.csv`,
    /// `test_neg.csv`, `meta.json` and, for non-identity features,
    /// `features.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_edge_csv(&dir.join("train_edges.csv"), &self.train_graph.edge_list())?;
        write_edge_csv(&dir.join("val_pos.csv"), &self.val_pos)?;
        write_edge_csv(&dir.join("val_neg.csv"), &self.val_neg)?;
        write_edge_csv(&dir.join("test_pos.csv"), &self.test_pos)?;
        write_edge_csv(&dir.join("test_neg.csv"), &self.test_neg)?;
        if let Features::Dense(m) = self.train_graph.features() {
            write_feature_csv(&dir.join("features.csv"), m)?;
        }
        let meta_path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::format("split metadata", e))?;
        fs::write(&meta_path, json + "\n").map_err(|e| Error::io(meta_path, e))
    }

    pub fn load(dir: &Path) -> Result<EdgeSplit> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SplitMeta =
            serde_json::from_str(&text).map_err(|e| Error::format("split metadata", e))?;
        if meta.format_version != SPLIT_FORMAT_VERSION {
            return Err(Error::format(
                "split metadata",
                format!("unsupported format version {}", meta.format_version),
            ));
        }
        let n = meta.num_nodes;
        let features = match meta.features.as_str() {
            "identity" => Features::Identity(n),
            "file" => Features::Dense(read_feature_csv(&dir.join("features.csv"), Precision::F64)?),
            other => {
                return Err(Error::format(
                    "split metadata",
                    format!("unknown feature source `{other}`"),
                ))
            }
        };
        let edges = |name: &str| -> Result<Vec<Edge>> {
            let path = dir.join(name);
            let raw = match read_edge_csv(&path) {
                Err(Error::EmptyEdgeFile(_)) => Vec::new(),
                other => other?,
            };
            raw.into_iter()
                .map(|(u, v)| {
                    let (u, v) = (u as usize, v as usize);
                    if u >= n || v >= n {
                        Err(Error::NodeOutOfRange {
                            id: u.max(v),
                            num_nodes: n,
                        })
                    } else {
                        Ok((u, v))
                    }
                })
                .collect()
        };
        let train_graph = DirectedGraph::from_edges(n, edges("train_edges.csv")?, features)?;
        let split = EdgeSplit {
            train_graph,
            val_pos: edges("val_pos.csv")?,
            val_neg: edges("val_neg.csv")?,
            test_pos: edges("test_pos.csv")?,
            test_neg: edges("test_neg.csv")?,
            seed: meta.seed,
            val_frac: meta.val_frac,
            test_frac: meta.test_frac,
        };
        if split.counts() != meta.counts {
            return Err(Error::format(
                "split directory",
                format!(
                    "edge counts {:?} disagree with meta.json {:?}",
                    split.counts(),
                    meta.counts
                ),
            ));
        }
        Ok(split)
    }
}
