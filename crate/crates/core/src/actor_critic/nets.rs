use super::reward::{RewardScope, RiskPreference};
use crate::diff::{Bound, DiffError, Matrix, ParamId, ParamStore, Tape, Var};
use crate::gat::{BiEmbedding, GatConfig, GraphIndex, GraphPair, LEAKY_SLOPE};
use crate::netmodel::{ActionTensor, EdgeActions, NodeStateMatrix, Topology};
use crate::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Architecture shared by the actor and the critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Imbalance features per node.
    pub k: usize,
    pub mot_count: usize,
    pub prefs: Vec<RiskPreference>,
    pub gamma: f64,
    pub gat_x: GatConfig,
    pub gat_xa: GatConfig,
    pub mlp_mu: Vec<usize>,
    pub mlp_q: Vec<usize>,
    #[serde(default)]
    pub reward_scope: RewardScope,
    /// Initial bias of the policy's output logits. Negative values start
    /// every edge at a small shipment fraction instead of one half.
    #[serde(default)]
    pub policy_bias: f64,
}

impl ModelConfig {
    /// Table-sized defaults: three heads, GAT_X `[16,16,16]`, GAT_XA
    /// `[100,20,20]`, mlp_μ `[32,8]`, mlp_Q `[128,32,8]`, γ = 0.95.
    pub fn standard(k: usize, mot_count: usize) -> Self {
        Self {
            k,
            mot_count,
            prefs: RiskPreference::default_grid(),
            gamma: 0.95,
            gat_x: GatConfig {
                dims: vec![16, 16, 16],
                heads: 3,
            },
            gat_xa: GatConfig {
                dims: vec![100, 20, 20],
                heads: 3,
            },
            mlp_mu: vec![32, 8],
            mlp_q: vec![128, 32, 8],
            reward_scope: RewardScope::AllNodes,
            policy_bias: 0.0,
        }
    }

    /// A narrow variant for fast tests and gradient checks.
    pub fn tiny(k: usize, mot_count: usize, prefs: Vec<RiskPreference>) -> Self {
        Self {
            k,
            mot_count,
            prefs,
            gamma: 0.95,
            gat_x: GatConfig {
                dims: vec![4, 4],
                heads: 2,
            },
            gat_xa: GatConfig {
                dims: vec![5, 4],
                heads: 2,
            },
            mlp_mu: vec![6],
            mlp_q: vec![6],
            reward_scope: RewardScope::AllNodes,
            policy_bias: 0.0,
        }
    }

    pub fn pref_count(&self) -> usize {
        self.prefs.len()
    }

    /// `1/(1−γ)`, the per-node value bound.
    pub fn value_scale(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }
}

/// Feed-forward net with LeakyReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for (l, &h) in hidden.iter().chain(std::iter::once(&output)).enumerate() {
            let w = store.push_glorot(format!("{prefix}.{l}.w"), width, h, rng);
            let b = store.push_zeros(format!("{prefix}.{l}.b"), 1, h);
            layers.push((w, b));
            width = h;
        }
        Self { layers }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Var {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, p.var(w));
            h = tape.add_row(z, p.var(b));
            if i + 1 < self.layers.len() {
                h = tape.leaky_relu(h, T::lit(LEAKY_SLOPE));
            }
        }
        h
    }
}

/// Actor: per-edge sigmoid fractions scaled into each source's capability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub emb: BiEmbedding,
    pub mlp: Mlp,
    pub prefs: usize,
    pub mots: usize,
}

/// Tape handles for a policy evaluation; both are `|E| × (|Λ|·M)` with
/// column `λ·M + m`.
pub struct PolicyOutput {
    pub fractions: Var,
    pub actions: Var,
}

impl PolicyNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let emb = BiEmbedding::new(store, "mu.emb", cfg.k, &cfg.gat_x, None, rng);
        let width = 2 * emb.out_dim();
        let mlp = Mlp::new(store, "mu.mlp", width, &cfg.mlp_mu, cfg.mot_count * cfg.pref_count(), rng);
        if cfg.policy_bias != 0.0 {
            let (_, b) = *mlp.layers.last().expect("output layer");
            store.get_mut(b).as_mut_slice().fill(T::lit(cfg.policy_bias));
        }
        Self {
            emb,
            mlp,
            prefs: cfg.pref_count(),
            mots: cfg.mot_count,
        }
    }

    /// `capability` is the `|V| × 1` column of clamped supply capabilities.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        g: &GraphPair,
        capability: Var,
    ) -> Result<PolicyOutput, DiffError> {
        let n = g.fwd.nodes;
        if tape.shape(capability) != (n, 1) {
            return Err(DiffError::ShapeMismatch(format!(
                "capability must be {n}×1, got {:?}",
                tape.shape(capability)
            )));
        }
        let s = self.emb.embed_x(tape, p, x, g)?;
        let sv = tape.gather_rows(s, &g.fwd.edge_src);
        let sw = tape.gather_rows(s, &g.fwd.edge_dst);
        let inp = tape.hconcat(&[sv, sw]);
        let logits = self.mlp.forward(tape, p, inp);
        let frac = tape.sigmoid(logits);
        let actions = scale_to_capability(tape, frac, &g.fwd, capability, self.prefs);
        Ok(PolicyOutput {
            fractions: frac,
            actions,
        })
    }

    /// The `|E| × M` block of preference `pref`.
    pub fn slice<T: Scalar>(&self, tape: &mut Tape<T>, actions: Var, pref: usize) -> Var {
        tape.slice_cols(actions, pref * self.mots, (pref + 1) * self.mots)
    }
}

/// `a = Y_v · â` when `A_v ≤ 1`, else `(Y_v / A_v) · â`, per preference block,
/// where `A_v` sums `source v`'s fractions over its out-edges and MOTs.
pub fn scale_to_capability<T: Scalar>(
    tape: &mut Tape<T>,
    fractions: Var,
    g: &GraphIndex,
    capability: Var,
    prefs: usize,
) -> Var {
    let per_edge = tape.block_sum(fractions, prefs);
    let total = tape.scatter_add_rows(per_edge, &g.edge_src, g.nodes);
    let denom = tape.max_const(total, T::one());
    let inv = tape.recip(denom);
    let factor = tape.mul_col(inv, capability);
    let edge_factor = tape.gather_rows(factor, &g.edge_src);
    tape.head_scale(fractions, edge_factor)
}

/// Critic: per-node `tanh × 1/(1−γ)` values, one column per preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub emb: BiEmbedding,
    pub mlp: Mlp,
    pub prefs: usize,
    pub scale: f64,
}

impl ValueNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let emb = BiEmbedding::new(store, "q.emb", cfg.k, &cfg.gat_xa, Some(cfg.mot_count), rng);
        let mlp = Mlp::new(store, "q.mlp", emb.out_dim(), &cfg.mlp_q, cfg.pref_count(), rng);
        Self {
            emb,
            mlp,
            prefs: cfg.pref_count(),
            scale: cfg.value_scale(),
        }
    }

    /// `|V| × |Λ|` node values for one `|E| × M` action slice.
    pub fn node_values<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        a: Var,
        g: &GraphPair,
    ) -> Result<Var, DiffError> {
        let u = self.emb.embed_xa(tape, p, x, a, g)?;
        let o = self.mlp.forward(tape, p, u);
        let t = tape.tanh(o);
        Ok(tape.scale(t, T::lit(self.scale)))
    }

    /// `1 × |Λ|` network values `Σ_v q_v^λ` for one action slice.
    pub fn network_values<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        a: Var,
        g: &GraphPair,
    ) -> Result<Var, DiffError> {
        let q = self.node_values(tape, p, x, a, g)?;
        let ones = tape.constant(Matrix::filled(1, g.fwd.nodes, T::one()));
        Ok(tape.matmul(ones, q))
    }

    /// `1 × |Λ|` values where preference `λ` scores its own slice of the
    /// `|E| × (|Λ|·M)` actions, computed in one pass over `rep`, the
    /// `|Λ|`-fold replica of the graph.
    pub fn q_diag<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        actions: Var,
        mots: usize,
        rep: &GraphPair,
    ) -> Result<Var, DiffError> {
        let l = self.prefs;
        let (n, _) = tape.shape(x);
        if rep.fwd.nodes != n * l {
            return Err(DiffError::ShapeMismatch(format!(
                "replica has {} nodes, expected {}",
                rep.fwd.nodes,
                n * l
            )));
        }
        let xs = vec![x; l];
        let x_rep = tape.vconcat(&xs);
        let slices: Vec<Var> = (0..l).map(|k| tape.slice_cols(actions, k * mots, (k + 1) * mots)).collect();
        let a_rep = tape.vconcat(&slices);
        let q = self.node_values(tape, p, x_rep, a_rep, rep)?;
        let mut mask = Matrix::zeros(n * l, l);
        for k in 0..l {
            for v in 0..n {
                mask.set(k * n + v, k, T::one());
            }
        }
        let mask = tape.constant(mask);
        let picked = tape.mul(q, mask);
        let ones = tape.constant(Matrix::filled(1, n * l, T::one()));
        Ok(tape.matmul(ones, picked))
    }

    /// `1 × 1` network value of preference `pref` under its own slice.
    pub fn q_pref<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        x: Var,
        a: Var,
        g: &GraphPair,
        pref: usize,
    ) -> Result<Var, DiffError> {
        let q = self.network_values(tape, p, x, a, g)?;
        Ok(tape.slice_cols(q, pref, pref + 1))
    }
}

/// Node features as an `|V| × K` matrix.
pub fn state_matrix<T: Scalar>(x: &NodeStateMatrix) -> Matrix<T> {
    Matrix::from_vec(x.node_count(), x.k(), x.values().iter().map(|&v| T::lit(v)).collect())
}

/// Edge actions as an `|E| × M` matrix.
pub fn action_matrix<T: Scalar>(a: &EdgeActions) -> Matrix<T> {
    Matrix::from_vec(a.edge_count(), a.mot_count(), a.values().iter().map(|&v| T::lit(v)).collect())
}

/// Evaluates the actor without gradients; returns `|Λ|` action slices.
pub fn policy_actions(
    net: &PolicyNet,
    params: &ParamStore<f64>,
    x: &NodeStateMatrix,
    g: &GraphPair,
    capability: &[f64],
) -> Result<ActionTensor, DiffError> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let xv = tape.constant(state_matrix(x));
    let cap = tape.constant(Matrix::column(capability.to_vec()));
    let out = net.forward(&mut tape, &p, xv, g, cap)?;
    let m = tape.value(out.actions);
    let edges = g.fwd.edges;
    let slices = (0..net.prefs)
        .map(|l| {
            let mut vals = Vec::with_capacity(edges * net.mots);
            for e in 0..edges {
                vals.extend_from_slice(&m.row(e)[l * net.mots..(l + 1) * net.mots]);
            }
            EdgeActions::from_values(edges, net.mots, vals)
                .map_err(|e| DiffError::InvalidArgument(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ActionTensor::new(slices).map_err(|e| DiffError::InvalidArgument(e.to_string()))
}

/// Graph indices for one topology and for its `|Λ|`-fold replica.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub single: GraphPair,
    pub rep: GraphPair,
}

impl PreparedGraph {
    pub fn new(topo: &Topology, prefs: usize) -> Result<Self, DiffError> {
        let rep = topo
            .replicate(prefs)
            .map_err(|e| DiffError::InvalidArgument(e.to_string()))?;
        Ok(Self {
            single: GraphPair::new(topo),
            rep: GraphPair::new(&rep),
        })
    }
}

/// Joins `|Λ|` slices into one `|E| × (|Λ|·M)` matrix.
pub(crate) fn action_tensor_matrix<T: Scalar>(a: &ActionTensor) -> Matrix<T> {
    let l = a.pref_count();
    let e = a.slice(0).edge_count();
    let m = a.slice(0).mot_count();
    let mut out = Matrix::zeros(e, l * m);
    for (k, s) in a.slices().iter().enumerate() {
        for r in 0..e {
            for c in 0..m {
                out.set(r, k * m + c, T::lit(s.get(r, c)));
            }
        }
    }
    out
}

/// All `|Λ|` network values of a single action slice.
pub fn value_all_prefs(
    net: &ValueNet,
    params: &ParamStore<f64>,
    x: &NodeStateMatrix,
    a: &EdgeActions,
    g: &GraphPair,
) -> Result<Vec<f64>, DiffError> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let xv = tape.constant(state_matrix(x));
    let av = tape.constant(action_matrix(a));
    let q = net.network_values(&mut tape, &p, xv, av, g)?;
    Ok(tape.value(q).as_slice().to_vec())
}

/// Same as [`value_per_pref`] through the replica graph.
pub fn value_diag(
    net: &ValueNet,
    params: &ParamStore<f64>,
    x: &NodeStateMatrix,
    a: &ActionTensor,
    g: &PreparedGraph,
) -> Result<Vec<f64>, DiffError> {
    if a.pref_count() != net.prefs {
        return Err(DiffError::ShapeMismatch(format!(
            "{} action slices for {} preferences",
            a.pref_count(),
            net.prefs
        )));
    }
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let xv = tape.constant(state_matrix(x));
    let av = tape.constant(action_tensor_matrix(a));
    let q = net.q_diag(&mut tape, &p, xv, av, a.slice(0).mot_count(), &g.rep)?;
    Ok(tape.value(q).as_slice().to_vec())
}

/// Network values `q^λ` with each preference evaluated on its own slice.
pub fn value_per_pref(
    net: &ValueNet,
    params: &ParamStore<f64>,
    x: &NodeStateMatrix,
    a: &ActionTensor,
    g: &GraphPair,
) -> Result<Vec<f64>, DiffError> {
    if a.pref_count() != net.prefs {
        return Err(DiffError::ShapeMismatch(format!(
            "{} action slices for {} preferences",
            a.pref_count(),
            net.prefs
        )));
    }
    let mut tape = Tape::new();
    let p = params.bind(&mut tape, false);
    let xv = tape.constant(state_matrix(x));
    let mut out = Vec::with_capacity(net.prefs);
    for (l, slice) in a.slices().iter().enumerate() {
        if slice.edge_count() != g.fwd.edges {
            return Err(DiffError::ShapeMismatch("action slice does not fit the topology".into()));
        }
        let av = tape.constant(action_matrix(slice));
        let q = net.q_pref(&mut tape, &p, xv, av, g, l)?;
        out.push(tape.scalar_value(q));
    }
    Ok(out)
}
