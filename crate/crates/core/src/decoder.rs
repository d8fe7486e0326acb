//! Edge decoders. Every score is a pre-sigmoid logit.
//!
//! * gravity: `m̃_v − log max(‖h̄_u − h̄_v‖², eps)`; positions are all encoder
//!   columns but the last, which holds the log-mass.
//! * source/target: `h_u^s · h_v^t`, with the encoder output split in halves.
//! * symmetric: `h_u · h_v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::GravityEmbedding;
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::linalg::{dot, squared_distance, Matrix};

pub const DEFAULT_EPS_DIST: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderKind {
    Gravity { eps_dist: f64 },
    SourceTarget,
    Symmetric,
}

impl Default for DecoderKind {
    fn default() -> Self {
        DecoderKind::gravity()
    }
}

impl DecoderKind {
    pub fn gravity() -> Self {
        DecoderKind::Gravity {
            eps_dist: DEFAULT_EPS_DIST,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Gravity { .. } => "gravity",
            DecoderKind::SourceTarget => "source_target",
            DecoderKind::Symmetric => "symmetric",
        }
    }

    /// Whether `score(u, v)` can differ from `score(v, u)`.
    pub fn is_directed(&self) -> bool {
        !matches!(self, DecoderKind::Symmetric)
    }

    /// Encoder output width needed for an embedding of `embedding_dim`.
    pub fn output_dim(&self, embedding_dim: usize) -> usize {
        match self {
            DecoderKind::Gravity { .. } => embedding_dim + 1,
            DecoderKind::SourceTarget => 2 * embedding_dim,
            DecoderKind::Symmetric => embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DecoderKind::Gravity { eps_dist } if !(*eps_dist > 0.0 && eps_dist.is_finite()) => Err(
                Error::invalid(format!("eps_dist must be positive, got {eps_dist}")),
            ),
            _ => Ok(()),
        }
    }

    fn check_width(&self, z: &Matrix) -> Result<()> {
        let ok = match self {
            DecoderKind::Gravity { .. } => z.cols() >= 2,
            DecoderKind::SourceTarget => z.cols() >= 2 && z.cols().is_multiple_of(2),
            DecoderKind::Symmetric => z.cols() >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{} decoder cannot use a {}-column embedding",
                self.name(),
                z.cols()
            )))
        }
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gravity" => Ok(DecoderKind::gravity()),
            "st" | "source_target" => Ok(DecoderKind::SourceTarget),
            "sym" | "symmetric" => Ok(DecoderKind::Symmetric),
            other => Err(Error::invalid(format!(
                "unknown decoder `{other}` (expected gravity, st or sym)"
            ))),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_ids(n: usize, u: usize, v: usize) -> Result<()> {
    for id in [u, v] {
        if id >= n {
            return Err(Error::NodeOutOfRange { id, num_nodes: n });
        }
    }
    Ok(())
}

fn gravity_logit(pu: &[f64], pv: &[f64], mass_v: f64, eps_dist: f64) -> f64 {
    mass_v - squared_distance(pu, pv).max(eps_dist).ln()
}

pub fn score_gravity(emb: &GravityEmbedding, u: usize, v: usize, eps_dist: f64) -> Result<f64> {
    check_ids(emb.num_nodes(), u, v)?;
    Ok(gravity_logit(
        emb.positions.row(u),
        emb.positions.row(v),
        emb.masses[v],
        eps_dist,
    ))
}

pub fn score_source_target(emb_s: &Matrix, emb_t: &Matrix, u: usize, v: usize) -> Result<f64> {
    if emb_s.shape() != emb_t.shape() {
        return Err(Error::shape(format!(
            "source {:?} and target {:?} embeddings",
            emb_s.shape(),
            emb_t.shape()
        )));
    }
    check_ids(emb_s.rows(), u, v)?;
    Ok(dot(emb_s.row(u), emb_t.row(v)))
}

pub fn score_symmetric(emb: &Matrix, u: usize, v: usize) -> Result<f64> {
    check_ids(emb.rows(), u, v)?;
    Ok(dot(emb.row(u), emb.row(v)))
}

/// Logits for a batch of edges, reading the raw encoder output `z`.
pub fn score_edges(kind: DecoderKind, z: &Matrix, edges: &[Edge]) -> Result<Vec<f64>> {
    kind.validate()?;
    kind.check_width(z)?;
    let d = z.cols();
    edges
        .iter()
        .map(|&(u, v)| {
            check_ids(z.rows(), u, v)?;
            let (zu, zv) = (z.row(u), z.row(v));
            Ok(match kind {
                DecoderKind::Gravity { eps_dist } => {
                    gravity_logit(&zu[..d - 1], &zv[..d - 1], zv[d - 1], eps_dist)
                }
                DecoderKind::SourceTarget => dot(&zu[..d / 2], &zv[d / 2..]),
                DecoderKind::Symmetric => dot(zu, zv),
            })
        })
        .collect()
}

/// Gradient of `Σ_e grad_logits[e] · logit_e` with respect to `z`.
///
/// For gravity, the clamped case (`‖Δ‖² < eps`) has zero position gradient.
pub fn decoder_backward(
    kind: DecoderKind,
    z: &Matrix,
    edges: &[Edge],
    grad_logits: &[f64],
) -> Result<Matrix> {
    kind.validate()?;
    kind.check_width(z)?;
    if edges.len() != grad_logits.len() {
        return Err(Error::shape(format!(
            "{} edges with {} logit gradients",
            edges.len(),
            grad_logits.len()
        )));
    }
    let d = z.cols();
    let mut grad = Matrix::zeros(z.rows(), d);
    for (&(u, v), &g) in edges.iter().zip(grad_logits) {
        check_ids(z.rows(), u, v)?;
        if g == 0.0 {
            continue;
        }
        match kind {
            DecoderKind::Gravity { eps_dist } => {
                let p = d - 1;
                let (zu, zv) = (z.row(u), z.row(v));
                let dist2 = squared_distance(&zu[..p], &zv[..p]);
                let delta: Vec<f64> = zu[..p].iter().zip(&zv[..p]).map(|(a, b)| a - b).collect();
                grad.row_mut(v)[p] += g;
                if dist2 >= eps_dist {
                    let scale = -2.0 * g / dist2;
                    for (x, dx) in grad.row_mut(u)[..p].iter_mut().zip(&delta) {
                        *x += scale * dx;
                    }
                    for (x, dx) in grad.row_mut(v)[..p].iter_mut().zip(&delta) {
                        *x -= scale * dx;
                    }
                }
            }
            DecoderKind::SourceTarget => {
                let k = d / 2;
                let zv_t: Vec<f64> = z.row(v)[k..].to_vec();
                let zu_s: Vec<f64> = z.row(u)[..k].to_vec();
                for (x, t) in grad.row_mut(u)[..k].iter_mut().zip(&zv_t) {
                    *x += g * t;
                }
                for (x, s) in grad.row_mut(v)[k..].iter_mut().zip(&zu_s) {
                    *x += g * s;
                }
            }
            DecoderKind::Symmetric => {
                let (zu, zv) = (z.row(u).to_vec(), z.row(v).to_vec());
                for (x, y) in grad.row_mut(u).iter_mut().zip(&zv) {
                    *x += g * y;
                }
                for (x, y) in grad.row_mut(v).iter_mut().zip(&zu) {
                    *x += g * y;
                }
            }
        }
    }
    Ok(grad)
}
