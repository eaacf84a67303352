//! Policy and value heads, the node reward, and the behavioral regularizer.

mod nets;
mod reward;

pub use nets::{
    policy_actions, scale_to_capability, value_all_prefs, value_diag, value_per_pref, Mlp, ModelConfig, PolicyNet,
    PolicyOutput, PreparedGraph, ValueNet,
};
pub use nets::{action_matrix, state_matrix};
pub use reward::{
    behavioral_regularizer, network_reward, node_reward, scoped_reward, RewardScope, RiskError, RiskPreference,
};

use crate::diff::{Matrix, Tape, Var};
use crate::gat::GraphIndex;
use crate::netmodel::{EdgeActions, NodeKind, NodeStateMatrix};
use crate::Scalar;
use serde::{Deserialize, Serialize};

/// Shippable quantity this interval. Distribution nodes serve their own
/// demand first; production nodes face none. Never negative.
pub fn supply_capability(kind: NodeKind, inventory: f64, arrivals: f64, demand: f64) -> f64 {
    match kind {
        NodeKind::Distribution => (inventory + arrivals - demand).max(0.0),
        NodeKind::Production => (inventory + arrivals).max(0.0),
    }
}

/// Capability implied by a state: the second profile entry (inventory plus
/// committed arrivals minus predicted demand, or plus planned production),
/// clamped at zero. With `K = 1` the inventory itself.
pub fn capability_from_state(x: &NodeStateMatrix) -> Vec<f64> {
    (0..x.node_count())
        .map(|v| {
            let p = x.profile(v);
            p[1.min(p.len() - 1)].max(0.0)
        })
        .collect()
}

/// Regularizer `L^λ` on the tape for an `|E| × M` action slice.
pub fn regularizer_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    actions: Var,
    x: &NodeStateMatrix,
    g: &GraphIndex,
    f_ref: f64,
) -> Var {
    let short: Vec<T> = (0..x.node_count())
        .map(|v| T::lit((x.last(v) - f_ref).min(0.0)))
        .collect();
    let short = tape.constant(Matrix::column(short));
    let per_edge = tape.row_sum(actions);
    let incoming = tape.scatter_add_rows(per_edge, &g.edge_dst, g.nodes);
    let gap = tape.add(incoming, short);
    let sq = tape.square(gap);
    let m = tape.mean(sq);
    tape.scale(m, -T::one())
}

/// Optional shipping limits applied after the policy, outside any gradient:
/// a per-MOT capacity on every edge and a minimum order quantity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShippingConstraints {
    /// Maximum quantity per edge for each MOT, in scaled units.
    pub mot_capacity: Option<Vec<f64>>,
    /// Shipments are rounded down to multiples of this size.
    pub moq: Option<f64>,
}

impl ShippingConstraints {
    pub fn is_active(&self) -> bool {
        self.mot_capacity.is_some() || self.moq.is_some()
    }

    /// Only ever lowers quantities, so capability limits stay satisfied.
    pub fn apply(&self, a: &mut EdgeActions) {
        let m = a.mot_count();
        for e in 0..a.edge_count() {
            for k in 0..m {
                let mut q = a.get(e, k);
                if let Some(cap) = self.mot_capacity.as_ref().and_then(|c| c.get(k)) {
                    q = q.min(*cap);
                }
                if let Some(moq) = self.moq.filter(|&v| v > 0.0) {
                    q = ((q / moq) + 1e-9).floor() * moq;
                }
                a.set(e, k, q.max(0.0));
            }
        }
    }
}

#[cfg(test)]
mod tests;
