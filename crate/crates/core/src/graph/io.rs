//! CSV ingestion and export.
//!
//! Edge files hold one `src,dst` integer pair per line with an optional
//! header row. Feature files hold one comma-separated row of floats per node,
//! without a header, in node-id order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::{DirectedGraph, Edge, Features};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    /// Feature values are rounded through `f32` at load time.
    F32,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub precision: Precision,
    /// Forces the node count when no feature file fixes it; otherwise the
    /// largest id in the edge file determines `n`.
    pub num_nodes: Option<usize>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(file))
}

fn record_line(rec: &StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Parse {
            path: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        },
    }
}

/// Raw `(src, dst)` id pairs, in file order.
pub fn read_edge_csv(path: &Path) -> Result<Vec<(u64, u64)>> {
    let mut rdr = reader(path)?;
    let mut pairs = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let line = record_line(&rec);
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        let src = rec[0].parse::<u64>();
        let dst = rec[1].parse::<u64>();
        match (src, dst) {
            (Ok(s), Ok(d)) => pairs.push((s, d)),
            (Err(_), Err(_)) if idx == 0 => continue, // header row
            _ => {
                return Err(parse_err(format!(
                    "non-integer node id in `{},{}`",
                    &rec[0], &rec[1]
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyEdgeFile(path.display().to_string()));
    }
    Ok(pairs)
}

pub fn read_feature_csv(path: &Path, precision: Precision) -> Result<Matrix> {
    let mut rdr = reader(path)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let width = *cols.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("row has {} values, expected {width}", rec.len()),
            });
        }
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("non-numeric feature value `{field}`"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("non-finite feature value `{field}`"),
                });
            }
            data.push(match precision {
                Precision::F64 => x,
                Precision::F32 => x as f32 as f64,
            });
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn load_graph(edge_csv: &Path, feature_csv: Option<&Path>) -> Result<DirectedGraph> {
    load_graph_with(edge_csv, feature_csv, &LoadOptions::default())
}

pub fn load_graph_with(
    edge_csv: &Path,
    feature_csv: Option<&Path>,
    opts: &LoadOptions,
) -> Result<DirectedGraph> {
    let raw = read_edge_csv(edge_csv)?;
    let max_id = raw.iter().map(|&(s, d)| s.max(d)).max().unwrap_or(0);
    let features = feature_csv
        .map(|p| read_feature_csv(p, opts.precision))
        .transpose()?;
    let num_nodes = match (&features, opts.num_nodes) {
        (Some(f), Some(n)) if f.rows() != n => {
            return Err(Error::FeatureRowCount {
                rows: f.rows(),
                num_nodes: n,
            })
        }
        (Some(f), _) => f.rows(),
        (None, Some(n)) => n,
        (None, None) => {
            usize::try_from(max_id).map_err(|_| Error::NodeOutOfRange {
                id: usize::MAX,
                num_nodes: 0,
            })? + 1
        }
    };
    let edges = raw
        .into_iter()
        .map(|(s, d)| {
            let s = usize::try_from(s).unwrap_or(usize::MAX);
            let d = usize::try_from(d).unwrap_or(usize::MAX);
            (s, d)
        })
        .collect::<Vec<Edge>>();
    let features = match features {
        Some(m) => Features::Dense(m),
        None => Features::Identity(num_nodes),
    };
    DirectedGraph::from_edges(num_nodes, edges, features)
}

/// Mapping from sparse original ids to dense ids `0..n`, in ascending
/// original-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    pub original: Vec<u64>,
}

impl IdMap {
    pub fn dense_id(&self, original: u64) -> Option<usize> {
        self.original.binary_search(&original).ok()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "original_id,dense_id").map_err(io)?;
        for (dense, orig) in self.original.iter().enumerate() {
            writeln!(w, "{orig},{dense}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Loads a graph whose edge file uses arbitrary (sparse) integer ids.
///
/// Distinct ids are densified in ascending order and the mapping is written
/// to `id_map_out`. A feature file, if given, must have one row per distinct
/// id in that same ascending order.
pub fn load_graph_remapped(
    edge_csv: &Path,
    feature_csv: Option<&Path>,
    id_map_out: &Path,
    precision: Precision,
) -> Result<(DirectedGraph, IdMap)> {
    let raw = read_edge_csv(edge_csv)?;
    let ids: BTreeMap<u64, ()> = raw.iter().flat_map(|&(s, d)| [(s, ()), (d, ())]).collect();
    let map = IdMap {
        original: ids.into_keys().collect(),
    };
    let n = map.original.len();
    let edges: Vec<Edge> = raw
        .iter()
        .map(|&(s, d)| (map.dense_id(s).unwrap(), map.dense_id(d).unwrap()))
        .collect();
    let features = match feature_csv {
        Some(p) => Features::Dense(read_feature_csv(p, precision)?),
        None => Features::Identity(n),
    };
    let g = DirectedGraph::from_edges(n, edges, features)?;
    map.write_csv(id_map_out)?;
    Ok((g, map))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_edge_csv(path: &Path, edges: &[Edge]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "src,dst").map_err(io)?;
    for (u, v) in edges {
        writeln!(w, "{u},{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every value bit-for-bit.
pub fn write_feature_csv(path: &Path, features: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for i in 0..features.rows() {
        let mut line = String::new();
        for (j, x) in features.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_graph(g: &DirectedGraph, edge_csv: &Path, feature_csv: Option<&Path>) -> Result<()> {
    write_edge_csv(edge_csv, &g.edge_list())?;
    if let Some(p) = feature_csv {
        write_feature_csv(p, &g.features().to_dense())?;
    }
    Ok(())
}
