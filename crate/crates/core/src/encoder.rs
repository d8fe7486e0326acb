//! Two-layer message-passing encoders.
//!
//! The SAGE encoder computes, per layer,
//! `h' = normalize(f(W · [mean(h_v, h_N(v)) ‖ h_v] + b))` with ReLU on the
//! first layer and ELU on the second. The GCN baseline propagates with the same
//! mean operator but without concatenation, with a linear output layer and no
//! normalization.
//!
//! The last output column is the mass channel read by the gravity decoder.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Csr, DirectedGraph, NeighborMode};
use crate::linalg::{
    elu, elu_grad, l2_normalize_leading, l2_normalize_leading_backward, relu, relu_grad, Matrix,
    SparseBuilder, SparseMatrix,
};
use crate::rng::{stream_rng, Stream};

/// Zero-row guard for L2 normalization.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Sage,
    Gcn,
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sage" => Ok(EncoderKind::Sage),
            "gcn" => Ok(EncoderKind::Gcn),
            other => Err(Error::invalid(format!(
                "unknown encoder `{other}` (expected sage or gcn)"
            ))),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Sage => "sage",
            EncoderKind::Gcn => "gcn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    pub neighbor_mode: NeighborMode,
    /// Keep the mass column out of the final L2 normalization (SAGE only).
    #[serde(default)]
    pub mass_outside_norm: bool,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(
    kind: EncoderKind,
    neighbor_mode: NeighborMode,
    dims: EncoderDims,
    seed: u64,
) -> Result<EncoderParams> {
    if dims.input_dim == 0 || dims.hidden_dim == 0 || dims.output_dim == 0 {
        return Err(Error::invalid(format!(
            "encoder dimensions must be positive: {dims:?}"
        )));
    }
    let concat = match kind {
        EncoderKind::Sage => 2,
        EncoderKind::Gcn => 1,
    };
    let mut rng = stream_rng(seed, Stream::Init);
    let mut glorot = |rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
    };
    let w1 = glorot(concat * dims.input_dim, dims.hidden_dim);
    let w2 = glorot(concat * dims.hidden_dim, dims.output_dim);
    Ok(EncoderParams {
        kind,
        neighbor_mode,
        mass_outside_norm: false,
        w1,
        b1: vec![0.0; dims.hidden_dim],
        w2,
        b2: vec![0.0; dims.output_dim],
    })
}

impl EncoderParams {
    fn concat_factor(&self) -> usize {
        match self.kind {
            EncoderKind::Sage => 2,
            EncoderKind::Gcn => 1,
        }
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            input_dim: self.w1.rows() / self.concat_factor(),
            hidden_dim: self.w1.cols(),
            output_dim: self.w2.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.concat_factor();
        let (h, d2) = (self.w1.cols(), self.w2.cols());
        if !self.w1.rows().is_multiple_of(c)
            || self.w2.rows() != c * h
            || self.b1.len() != h
            || self.b2.len() != d2
        {
            return Err(Error::shape(format!(
                "{} encoder with w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                self.kind,
                self.w1.shape(),
                self.b1.len(),
                self.w2.shape(),
                self.b2.len()
            )));
        }
        if self.mass_outside_norm && (self.kind != EncoderKind::Sage || d2 < 2) {
            return Err(Error::invalid(
                "mass_outside_norm needs a SAGE encoder with at least 2 output columns",
            ));
        }
        self.w1.check_finite("w1")?;
        self.w2.check_finite("w2")?;
        if self.b1.iter().chain(&self.b2).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("encoder bias".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    /// Parameter buffers in the fixed order w1, b1, w2, b2.
    pub fn buffers_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn buffers(&self) -> [&[f64]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    fn normalized_span(&self) -> usize {
        let d2 = self.w2.cols();
        if self.mass_outside_norm {
            d2 - 1
        } else {
            d2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        ParamGrads {
            w1: Matrix::zeros(p.w1.rows(), p.w1.cols()),
            b1: vec![0.0; p.b1.len()],
            w2: Matrix::zeros(p.w2.rows(), p.w2.cols()),
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn buffers(&self) -> [&[f64]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn add_assign(&mut self, other: &ParamGrads) -> Result<()> {
        self.w1.add_assign(&other.w1)?;
        self.w2.add_assign(&other.w2)?;
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub params: ParamGrads,
    /// Gradient with respect to the node feature matrix, when requested.
    pub features: Option<Matrix>,
}

/// Node positions `h̄_u` and log-masses `m̃_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct GravityEmbedding {
    pub positions: Matrix,
    pub masses: Vec<f64>,
}

impl GravityEmbedding {
    pub fn new(positions: Matrix, masses: Vec<f64>) -> Result<Self> {
        if positions.rows() != masses.len() {
            return Err(Error::shape(format!(
                "{} positions for {} masses",
                positions.rows(),
                masses.len()
            )));
        }
        positions.check_finite("embedding positions")?;
        if masses.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("embedding masses".into()));
        }
        Ok(GravityEmbedding { positions, masses })
    }

    /// Splits encoder output into positions (all but the last column) and the
    /// mass column.
    pub fn from_output(out: &Matrix) -> Result<Self> {
        if out.cols() < 2 {
            return Err(Error::shape(format!(
                "gravity embedding needs at least 2 columns, got {}",
                out.cols()
            )));
        }
        let (positions, mass) = out.split_cols(out.cols() - 1);
        GravityEmbedding::new(positions, mass.into_data())
    }

    pub fn num_nodes(&self) -> usize {
        self.masses.len()
    }
}

/// Row-stochastic mean operator: row `v` averages `v` with its neighbors.
fn aggregation_operator(lists: &Csr) -> SparseMatrix {
    let n = lists.num_nodes();
    let mut b = SparseBuilder::new(n);
    let mut row = Vec::new();
    for v in 0..n {
        row.clear();
        row.extend_from_slice(lists.neighbors(v));
        row.push(v);
        row.sort_unstable();
        let w = 1.0 / row.len() as f64;
        for &u in &row {
            b.push(u, w);
        }
        b.finish_row();
    }
    b.build()
}

/// Caps every neighbor list at `cap` entries by seeded uniform sampling.
fn cap_neighbors(lists: &Csr, cap: usize, seed: u64) -> Csr {
    let mut rng = stream_rng(seed, Stream::NeighborCap);
    Csr::from_lists(
        (0..lists.num_nodes())
            .map(|v| {
                let nb = lists.neighbors(v);
                if nb.len() <= cap {
                    nb.to_vec()
                } else {
                    let mut picked: Vec<usize> = index::sample(&mut rng, nb.len(), cap)
                        .into_iter()
                        .map(|i| nb[i])
                        .collect();
                    picked.sort_unstable();
                    picked
                }
            })
            .collect(),
    )
}

/// `(h_v + Σ_{u ∈ N(v)} h_u) / (1 + |N(v)|)` for every node.
pub fn mean_aggregate(g: &DirectedGraph, h: &Matrix, mode: NeighborMode) -> Result<Matrix> {
    if h.rows() != g.num_nodes() {
        return Err(Error::shape(format!(
            "{} feature rows for {} nodes",
            h.rows(),
            g.num_nodes()
        )));
    }
    aggregation_operator(&g.neighbor_lists(mode)).matmul_dense(h)
}

/// Graph-dependent state shared by every forward pass on one graph: the
/// mean operator, its transpose, and the (constant) first-layer input.
#[derive(Debug, Clone)]
pub struct EncoderContext {
    kind: EncoderKind,
    mode: NeighborMode,
    num_nodes: usize,
    input_dim: usize,
    agg: SparseMatrix,
    agg_t: SparseMatrix,
    layer1_input: SparseMatrix,
    layer1_input_t: SparseMatrix,
}

impl EncoderContext {
    pub fn new(g: &DirectedGraph, kind: EncoderKind, mode: NeighborMode) -> Result<Self> {
        EncoderContext::with_neighbor_cap(g, kind, mode, None, 0)
    }

    /// Like [`EncoderContext::new`], optionally sampling at most
    /// `max_neighbors` neighbors per node (seeded, fixed for the context).
    pub fn with_neighbor_cap(
        g: &DirectedGraph,
        kind: EncoderKind,
        mode: NeighborMode,
        max_neighbors: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut lists = g.neighbor_lists(mode);
        if let Some(cap) = max_neighbors {
            if cap == 0 {
                return Err(Error::invalid("max_neighbors must be at least 1"));
            }
            lists = cap_neighbors(&lists, cap, seed);
        }
        let agg = aggregation_operator(&lists);
        let features = g.features().to_sparse();
        let aggregated = agg.matmul_sparse(&features)?;
        let layer1_input = match kind {
            EncoderKind::Sage => SparseMatrix::hconcat(&aggregated, &features)?,
            EncoderKind::Gcn => aggregated,
        };
        Ok(EncoderContext {
            kind,
            mode,
            num_nodes: g.num_nodes(),
            input_dim: g.feature_dim(),
            agg_t: agg.transpose(),
            agg,
            layer1_input_t: layer1_input.transpose(),
            layer1_input,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn neighbor_mode(&self) -> NeighborMode {
        self.mode
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn aggregate(&self, h: &Matrix) -> Result<Matrix> {
        self.agg.matmul_dense(h)
    }

    /// Adjoint of [`EncoderContext::aggregate`].
    pub fn aggregate_backward(&self, grad: &Matrix) -> Result<Matrix> {
        self.agg_t.matmul_dense(grad)
    }

    fn check_params(&self, params: &EncoderParams) -> Result<()> {
        params.validate()?;
        if params.kind != self.kind || params.neighbor_mode != self.mode {
            return Err(Error::invalid(format!(
                "parameters for a {}/{} encoder used with a {}/{} context",
                params.kind, params.neighbor_mode, self.kind, self.mode
            )));
        }
        if params.dims().input_dim != self.input_dim {
            return Err(Error::shape(format!(
                "encoder expects {} input features, graph has {}",
                params.dims().input_dim,
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pre1: Matrix,
    act1: Matrix,
    hidden: Matrix,
    layer2_input: Matrix,
    pre2: Matrix,
    act2: Matrix,
    output: Matrix,
}

impl ForwardTape {
    /// Encoder output, `n × output_dim`.
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    pub fn hidden(&self) -> &Matrix {
        &self.hidden
    }
}

fn finite(m: Matrix, layer: usize, what: &str) -> Result<Matrix> {
    m.check_finite(&format!("layer {layer} {what}"))?;
    Ok(m)
}

pub fn forward(ctx: &EncoderContext, params: &EncoderParams) -> Result<ForwardTape> {
    ctx.check_params(params)?;
    let mut pre1 = ctx.layer1_input.matmul_dense(&params.w1)?;
    pre1.add_row_vector(&params.b1)?;
    let pre1 = finite(pre1, 1, "pre-activation")?;
    let act1 = pre1.map(relu);
    let hidden = match ctx.kind {
        EncoderKind::Sage => l2_normalize_leading(&act1, act1.cols(), NORM_EPS),
        EncoderKind::Gcn => act1.clone(),
    };
    let aggregated = ctx.aggregate(&hidden)?;
    let layer2_input = match ctx.kind {
        EncoderKind::Sage => Matrix::hconcat(&aggregated, &hidden)?,
        EncoderKind::Gcn => aggregated,
    };
    let mut pre2 = layer2_input.matmul(&params.w2)?;
    pre2.add_row_vector(&params.b2)?;
    let pre2 = finite(pre2, 2, "pre-activation")?;
    let (act2, output) = match ctx.kind {
        EncoderKind::Sage => {
            let act2 = pre2.map(elu);
            let out = l2_normalize_leading(&act2, params.normalized_span(), NORM_EPS);
            (act2, out)
        }
        EncoderKind::Gcn => (pre2.clone(), pre2.clone()),
    };
    let output = finite(output, 2, "output")?;
    Ok(ForwardTape {
        pre1,
        act1,
        hidden,
        layer2_input,
        pre2,
        act2,
        output,
    })
}

/// Exact reverse-mode gradients of a scalar loss given `grad_out = ∂L/∂output`.
pub fn backward(
    ctx: &EncoderContext,
    params: &EncoderParams,
    tape: &ForwardTape,
    grad_out: &Matrix,
    want_feature_grad: bool,
) -> Result<EncoderGrads> {
    if grad_out.shape() != tape.output.shape() {
        return Err(Error::shape(format!(
            "output gradient {:?} for output {:?}",
            grad_out.shape(),
            tape.output.shape()
        )));
    }
    let hidden_dim = params.w1.cols();

    let grad_pre2 = match ctx.kind {
        EncoderKind::Sage => {
            let g_act2 = l2_normalize_leading_backward(
                &tape.act2,
                grad_out,
                params.normalized_span(),
                NORM_EPS,
            )?;
            g_act2.hadamard_map(&tape.pre2, elu_grad)?
        }
        EncoderKind::Gcn => grad_out.clone(),
    };
    let w2 = tape.layer2_input.t_matmul(&grad_pre2)?;
    let b2 = grad_pre2.column_sums();
    let grad_layer2_input = grad_pre2.matmul_t(&params.w2)?;
    let grad_hidden = match ctx.kind {
        EncoderKind::Sage => {
            let (g_agg, mut g_self) = grad_layer2_input.split_cols(hidden_dim);
            g_self.add_assign(&ctx.aggregate_backward(&g_agg)?)?;
            g_self
        }
        EncoderKind::Gcn => ctx.aggregate_backward(&grad_layer2_input)?,
    };
    let grad_act1 = match ctx.kind {
        EncoderKind::Sage => {
            l2_normalize_leading_backward(&tape.act1, &grad_hidden, hidden_dim, NORM_EPS)?
        }
        EncoderKind::Gcn => grad_hidden,
    };
    let grad_pre1 = grad_act1.hadamard_map(&tape.pre1, relu_grad)?;
    let w1 = ctx.layer1_input_t.matmul_dense(&grad_pre1)?;
    let b1 = grad_pre1.column_sums();

    let features = if want_feature_grad {
        let grad_input = grad_pre1.matmul_t(&params.w1)?;
        Some(match ctx.kind {
            EncoderKind::Sage => {
                let (g_agg, mut g_self) = grad_input.split_cols(ctx.input_dim);
                g_self.add_assign(&ctx.aggregate_backward(&g_agg)?)?;
                g_self
            }
            EncoderKind::Gcn => ctx.aggregate_backward(&grad_input)?,
        })
    } else {
        None
    };

    Ok(EncoderGrads {
        params: ParamGrads { w1, b1, w2, b2 },
        features,
    })
}

fn forward_on_graph(
    g: &DirectedGraph,
    params: &EncoderParams,
    kind: EncoderKind,
) -> Result<(GravityEmbedding, ForwardTape)> {
    if params.kind != kind {
        return Err(Error::invalid(format!(
            "{kind} forward called with {} parameters",
            params.kind
        )));
    }
    let ctx = EncoderContext::new(g, kind, params.neighbor_mode)?;
    let tape = forward(&ctx, params)?;
    Ok((GravityEmbedding::from_output(tape.output())?, tape))
}

pub fn sage_forward(
    g: &DirectedGraph,
    params: &EncoderParams,
) -> Result<(GravityEmbedding, ForwardTape)> {
    forward_on_graph(g, params, EncoderKind::Sage)
}

pub fn gcn_forward(
    g: &DirectedGraph,
    params: &EncoderParams,
) -> Result<(GravityEmbedding, ForwardTape)> {
    forward_on_graph(g, params, EncoderKind::Gcn)
}
