//! GATv2 attention layers and bidirectional node embeddings.
//!
//! A layer scores every destination `i` against itself and each in-neighbour
//! `j` with `cᵀ LeakyReLU(W0 h_i + W1 h_j [+ W2 e_ji])`, normalizes the scores
//! per destination, and aggregates the messages `W0 h_i` (self) and
//! `W1 h_j [+ W2 e_ji]` (neighbours). Heads are concatenated between layers
//! and averaged at the last one.

use crate::diff::{Bound, DiffError, ParamId, ParamStore, Tape, Var};
use crate::netmodel::Topology;
use crate::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Row layout of one directed graph for attention: `n` self rows followed
/// by one row per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphIndex {
    pub nodes: usize,
    pub edges: usize,
    /// Destination of each self or edge row.
    pub row_dst: Vec<usize>,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
}

impl GraphIndex {
    pub fn new(topo: &Topology) -> Self {
        let n = topo.node_count();
        let mut row_dst: Vec<usize> = (0..n).collect();
        row_dst.extend_from_slice(topo.destinations());
        Self {
            nodes: n,
            edges: topo.edge_count(),
            row_dst,
            edge_src: topo.sources().to_vec(),
            edge_dst: topo.destinations().to_vec(),
        }
    }
}

/// Index data for the forward graph, its reverse, and the edge permutation
/// that mirrors edge features onto the reverse.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPair {
    pub fwd: GraphIndex,
    pub bwd: GraphIndex,
    pub mirror: Vec<usize>,
}

impl GraphPair {
    pub fn new(topo: &Topology) -> Self {
        let r = topo.reverse();
        Self {
            fwd: GraphIndex::new(topo),
            bwd: GraphIndex::new(&r.topology),
            mirror: r.origin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatConfig {
    /// Per-head output width of each layer.
    pub dims: Vec<usize>,
    pub heads: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatLayer {
    pub w0: ParamId,
    pub w1: ParamId,
    pub w2: Option<ParamId>,
    pub c: ParamId,
    pub in_dim: usize,
    pub dim: usize,
    pub heads: usize,
    pub last: bool,
}

/// Output of one layer together with its attention weights
/// (`(n + |E|) × heads`, rows laid out as in [`GraphIndex`]).
pub struct LayerOutput {
    pub h: Var,
    pub alpha: Var,
}

impl GatLayer {
    pub fn output_width(&self) -> usize {
        if self.last {
            self.dim
        } else {
            self.dim * self.heads
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        h: Var,
        edge_features: Option<Var>,
        g: &GraphIndex,
    ) -> Result<LayerOutput, DiffError> {
        let (rows, cols) = tape.shape(h);
        if rows != g.nodes || cols != self.in_dim {
            return Err(DiffError::ShapeMismatch(format!(
                "layer expects {}×{} node features, got {rows}×{cols}",
                g.nodes, self.in_dim
            )));
        }
        let p0 = tape.matmul(h, p.var(self.w0));
        let p1 = tape.matmul(h, p.var(self.w1));
        let self_score = tape.add(p0, p1);
        let dst0 = tape.gather_rows(p0, &g.edge_dst);
        let mut edge_msg = tape.gather_rows(p1, &g.edge_src);
        match (self.w2, edge_features) {
            (Some(w2), Some(e)) => {
                let width = tape.value(p.var(w2)).rows();
                if tape.shape(e) != (g.edges, width) {
                    return Err(DiffError::ShapeMismatch(format!(
                        "edge features must be {}×{width}, got {:?}",
                        g.edges,
                        tape.shape(e)
                    )));
                }
                let pe = tape.matmul(e, p.var(w2));
                edge_msg = tape.add(edge_msg, pe);
            }
            (None, None) => {}
            (Some(_), None) => return Err(DiffError::ShapeMismatch("edge features missing".into())),
            (None, Some(_)) => return Err(DiffError::ShapeMismatch("layer takes no edge features".into())),
        }
        let edge_score = tape.add(dst0, edge_msg);
        let z = tape.vconcat(&[self_score, edge_score]);
        let z = tape.leaky_relu(z, T::lit(LEAKY_SLOPE));
        let weighted = tape.mul_row(z, p.var(self.c));
        let scores = tape.block_sum(weighted, self.heads);
        let alpha = tape.segment_softmax(scores, &g.row_dst, g.nodes);
        let msg = tape.vconcat(&[p0, edge_msg]);
        let scaled = tape.head_scale(msg, alpha);
        let agg = tape.scatter_add_rows(scaled, &g.row_dst, g.nodes);
        let h = if self.last {
            tape.head_mean(agg, self.heads)
        } else {
            tape.leaky_relu(agg, T::lit(LEAKY_SLOPE))
        };
        Ok(LayerOutput { h, alpha })
    }
}

/// An `L`-layer attention network over one graph direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
}

impl GatStack {
    /// Registers Glorot-initialized weights under `prefix`. `edge_dim` adds
    /// the edge-feature projection `W2` to every layer.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        cfg: &GatConfig,
        edge_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        assert!(cfg.heads >= 1 && !cfg.dims.is_empty(), "GAT needs at least one layer and head");
        let mut layers = Vec::with_capacity(cfg.dims.len());
        let mut width = in_dim;
        for (l, &dim) in cfg.dims.iter().enumerate() {
            let hd = dim * cfg.heads;
            let w0 = store.push_glorot(format!("{prefix}.{l}.w0"), width, hd, rng);
            let w1 = store.push_glorot(format!("{prefix}.{l}.w1"), width, hd, rng);
            let w2 = edge_dim.map(|m| store.push_glorot(format!("{prefix}.{l}.w2"), m, hd, rng));
            let c = store.push_glorot(format!("{prefix}.{l}.c"), 1, hd, rng);
            let layer = GatLayer {
                w0,
                w1,
                w2,
                c,
                in_dim: width,
                dim,
                heads: cfg.heads,
                last: l + 1 == cfg.dims.len(),
            };
            width = layer.output_width();
            layers.push(layer);
        }
        Self { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, GatLayer::output_width)
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        edge_features: Option<Var>,
        g: &GraphIndex,
    ) -> Result<Var, DiffError> {
        Ok(self.forward_traced(tape, p, x, edge_features, g)?.0)
    }

    /// Like [`GatStack::forward`] but also returns each layer's attention.
    pub fn forward_traced<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        edge_features: Option<Var>,
        g: &GraphIndex,
    ) -> Result<(Var, Vec<Var>), DiffError> {
        let mut h = x;
        let mut alphas = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out = layer.forward(tape, p, h, edge_features, g)?;
            h = out.h;
            alphas.push(out.alpha);
        }
        Ok((h, alphas))
    }
}

/// `[GAT(G) ∥ GAT(G^R)]` with independent forward and backward parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiEmbedding {
    pub fwd: GatStack,
    pub bwd: GatStack,
}

impl BiEmbedding {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        cfg: &GatConfig,
        edge_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        Self {
            fwd: GatStack::new(store, &format!("{prefix}.f"), in_dim, cfg, edge_dim, rng),
            bwd: GatStack::new(store, &format!("{prefix}.b"), in_dim, cfg, edge_dim, rng),
        }
    }

    /// Width of the concatenated embedding, `2H`.
    pub fn out_dim(&self) -> usize {
        self.fwd.out_dim() + self.bwd.out_dim()
    }

    /// Node-feature-only embedding `s`.
    pub fn embed_x<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var, g: &GraphPair) -> Result<Var, DiffError> {
        let sf = self.fwd.forward(tape, p, x, None, &g.fwd)?;
        let sb = self.bwd.forward(tape, p, x, None, &g.bwd)?;
        Ok(tape.hconcat(&[sf, sb]))
    }

    /// Node-plus-action embedding `u`; `a` is `|E| × M` on the forward graph
    /// and is mirrored onto the reverse graph inside the tape.
    pub fn embed_xa<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        a: Var,
        g: &GraphPair,
    ) -> Result<Var, DiffError> {
        let b = tape.gather_rows(a, &g.mirror);
        let uf = self.fwd.forward(tape, p, x, Some(a), &g.fwd)?;
        let ub = self.bwd.forward(tape, p, x, Some(b), &g.bwd)?;
        Ok(tape.hconcat(&[uf, ub]))
    }
}
