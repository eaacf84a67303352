use super::topology::{Reversed, Topology};
use super::NetError;
use serde::{Deserialize, Serialize};

/// Per-edge, per-MOT supply quantities for a single risk preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeActions {
    mot_count: usize,
    /// Row-major `edges × mot_count`.
    values: Vec<f64>,
}

impl EdgeActions {
    pub fn zeros(edge_count: usize, mot_count: usize) -> Self {
        Self {
            mot_count,
            values: vec![0.0; edge_count * mot_count],
        }
    }

    pub fn for_topology(topo: &Topology) -> Self {
        Self::zeros(topo.edge_count(), topo.mot_count())
    }

    pub fn from_values(edge_count: usize, mot_count: usize, values: Vec<f64>) -> Result<Self, NetError> {
        if values.len() != edge_count * mot_count {
            return Err(NetError::Shape(format!(
                "expected {} action entries, got {}",
                edge_count * mot_count,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(NetError::NegativeQuantity(*bad));
        }
        Ok(Self { mot_count, values })
    }

    pub fn edge_count(&self) -> usize {
        self.values.len() / self.mot_count.max(1)
    }

    pub fn mot_count(&self) -> usize {
        self.mot_count
    }

    pub fn get(&self, edge: usize, mot: usize) -> f64 {
        self.values[edge * self.mot_count + mot]
    }

    pub fn set(&mut self, edge: usize, mot: usize, v: f64) {
        debug_assert!(v >= 0.0);
        self.values[edge * self.mot_count + mot] = v;
    }

    pub fn add(&mut self, edge: usize, mot: usize, v: f64) {
        self.values[edge * self.mot_count + mot] += v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn edge_total(&self, edge: usize) -> f64 {
        self.values[edge * self.mot_count..(edge + 1) * self.mot_count]
            .iter()
            .sum()
    }

    /// `A_v`: total quantity leaving node `v`.
    pub fn outgoing(&self, topo: &Topology, v: usize) -> f64 {
        topo.out_edges(v).iter().map(|&e| self.edge_total(e)).sum()
    }

    /// Total quantity sent towards node `v`.
    pub fn incoming(&self, topo: &Topology, v: usize) -> f64 {
        topo.in_edges(v).iter().map(|&e| self.edge_total(e)).sum()
    }

    pub fn conforms_to(&self, topo: &Topology) -> bool {
        self.mot_count == topo.mot_count() && self.values.len() == topo.edge_count() * topo.mot_count()
    }

    /// Re-expresses the actions on the reversed graph: `b_wv = a_vw`.
    pub fn mirror(&self, reversed: &Reversed) -> EdgeActions {
        let m = self.mot_count;
        let mut values = Vec::with_capacity(self.values.len());
        for &orig in &reversed.origin {
            values.extend_from_slice(&self.values[orig * m..(orig + 1) * m]);
        }
        EdgeActions {
            mot_count: m,
            values,
        }
    }

    /// Multiplies every quantity by `factor`.
    pub fn scaled(&self, factor: f64) -> EdgeActions {
        EdgeActions {
            mot_count: self.mot_count,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Actions for every risk preference: shape `|Λ| × |E| × M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionTensor {
    slices: Vec<EdgeActions>,
}

impl ActionTensor {
    pub fn new(slices: Vec<EdgeActions>) -> Result<Self, NetError> {
        if let Some(first) = slices.first() {
            if slices
                .iter()
                .any(|s| s.values.len() != first.values.len() || s.mot_count != first.mot_count)
            {
                return Err(NetError::Shape("risk-preference slices differ in shape".into()));
            }
        }
        Ok(Self { slices })
    }

    /// The same actions repeated for `prefs` risk preferences.
    pub fn broadcast(actions: &EdgeActions, prefs: usize) -> Self {
        Self {
            slices: vec![actions.clone(); prefs],
        }
    }

    pub fn pref_count(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, pref: usize) -> &EdgeActions {
        &self.slices[pref]
    }

    pub fn slices(&self) -> &[EdgeActions] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<EdgeActions> {
        self.slices
    }

    pub fn get(&self, pref: usize, edge: usize, mot: usize) -> f64 {
        self.slices[pref].get(edge, mot)
    }

    pub fn mirror(&self, reversed: &Reversed) -> ActionTensor {
        ActionTensor {
            slices: self.slices.iter().map(|s| s.mirror(reversed)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::NodeKind;

    #[test]
    fn mirror_moves_each_edge_to_its_reverse() {
        let t = Topology::new(vec![NodeKind::Distribution; 3], vec![(2, 0), (0, 1), (1, 2)], 2).unwrap();
        let a = EdgeActions::from_values(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = t.reverse();
        let b = a.mirror(&r);
        for (i, &(w, v)) in r.topology.edges().iter().enumerate() {
            let orig = t.edge_index(v, w).unwrap();
            for m in 0..2 {
                assert_eq!(b.get(i, m), a.get(orig, m));
            }
        }
    }

    #[test]
    fn mirror_twice_is_identity_on_sorted_graphs() {
        let t = Topology::new(vec![NodeKind::Distribution; 4], vec![(0, 1), (0, 3), (1, 2), (3, 2)], 1).unwrap();
        let a = EdgeActions::from_values(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = t.reverse();
        let rr = r.topology.reverse();
        assert_eq!(a.mirror(&r).mirror(&rr), a);
    }

    #[test]
    fn rejects_negative_and_misshapen() {
        assert!(EdgeActions::from_values(2, 1, vec![1.0, -0.1]).is_err());
        assert!(EdgeActions::from_values(2, 2, vec![1.0]).is_err());
        assert!(EdgeActions::from_values(1, 1, vec![f64::NAN]).is_err());
    }
}
