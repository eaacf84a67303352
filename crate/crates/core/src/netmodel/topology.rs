use super::NetError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Distribution,
    Production,
}

/// SKU-specific directed supply graph with dense node ids `0..n`.
///
/// Edge order is meaningful: action tensors index edges by position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    kinds: Vec<NodeKind>,
    edges: Vec<(usize, usize)>,
    mot_count: usize,
    srcs: Vec<usize>,
    dsts: Vec<usize>,
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
}

/// Edge-reversed graph plus the position map back into the original.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reversed {
    pub topology: Topology,
    /// `origin[i]` is the original edge that reversed edge `i` came from.
    pub origin: Vec<usize>,
}

impl Topology {
    pub fn new(
        kinds: Vec<NodeKind>,
        edges: Vec<(usize, usize)>,
        mot_count: usize,
    ) -> Result<Self, NetError> {
        let n = kinds.len();
        if n == 0 {
            return Err(NetError::InvalidTopology("no nodes".into()));
        }
        if mot_count == 0 {
            return Err(NetError::InvalidTopology("mot_count must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(s, d) in &edges {
            if s >= n || d >= n {
                return Err(NetError::InvalidTopology(format!(
                    "edge ({s}, {d}) references an undeclared node"
                )));
            }
            if s == d {
                return Err(NetError::InvalidTopology(format!("self-loop at node {s}")));
            }
            if !seen.insert((s, d)) {
                return Err(NetError::InvalidTopology(format!("duplicate edge ({s}, {d})")));
            }
        }
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (e, &(s, d)) in edges.iter().enumerate() {
            out_edges[s].push(e);
            in_edges[d].push(e);
        }
        Ok(Self {
            srcs: edges.iter().map(|e| e.0).collect(),
            dsts: edges.iter().map(|e| e.1).collect(),
            kinds,
            edges,
            mot_count,
            in_edges,
            out_edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn mot_count(&self) -> usize {
        self.mot_count
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn kind(&self, v: usize) -> NodeKind {
        self.kinds[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Source node of each edge, by edge position.
    pub fn sources(&self) -> &[usize] {
        &self.srcs
    }

    /// Destination node of each edge, by edge position.
    pub fn destinations(&self) -> &[usize] {
        &self.dsts
    }

    /// Edges ending at `v` (from `N_src(v)`).
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    /// Edges leaving `v` (into `N_dst(v)`).
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn edge_index(&self, src: usize, dst: usize) -> Option<usize> {
        self.out_edges[src].iter().copied().find(|&e| self.dsts[e] == dst)
    }

    /// Reverses every edge. Reversed edges are listed in lexicographic
    /// `(source, destination)` order; `origin` maps them back.
    pub fn reverse(&self) -> Reversed {
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by_key(|&e| (self.edges[e].1, self.edges[e].0));
        let edges = order.iter().map(|&e| (self.edges[e].1, self.edges[e].0)).collect();
        let topology = Topology::new(self.kinds.clone(), edges, self.mot_count)
            .expect("reversal of a valid topology is valid");
        Reversed {
            topology,
            origin: order,
        }
    }

    /// Same graph with node `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Topology {
        let mut kinds = self.kinds.clone();
        for (v, &p) in perm.iter().enumerate() {
            kinds[p] = self.kinds[v];
        }
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        Topology::new(kinds, edges, self.mot_count).expect("relabeling preserves validity")
    }

    /// Every node whose kind is `kind`.
    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&v| self.kinds[v] == kind)
    }

    /// Disjoint union with `other`; its nodes are shifted by `self.node_count()`.
    pub fn disjoint_union(&self, other: &Topology) -> Result<Topology, NetError> {
        if self.mot_count != other.mot_count {
            return Err(NetError::InvalidTopology("MOT count differs".into()));
        }
        let off = self.node_count();
        let mut kinds = self.kinds.clone();
        kinds.extend_from_slice(&other.kinds);
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(s, d)| (s + off, d + off)));
        Topology::new(kinds, edges, self.mot_count)
    }

    /// Disjoint union of `copies ≥ 1` copies; copy `c` occupies nodes
    /// `c·n..(c+1)·n` and edges `c·|E|..(c+1)·|E|`.
    pub fn replicate(&self, copies: usize) -> Result<Topology, NetError> {
        if copies == 0 {
            return Err(NetError::InvalidTopology("zero copies".into()));
        }
        let n = self.node_count();
        let kinds = self.kinds.repeat(copies);
        let edges = (0..copies)
            .flat_map(|c| self.edges.iter().map(move |&(s, d)| (s + c * n, d + c * n)))
            .collect();
        Topology::new(kinds, edges, self.mot_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dc(n: usize) -> Vec<NodeKind> {
        vec![NodeKind::Distribution; n]
    }

    #[test]
    fn reverses_a_fan_out() {
        let t = Topology::new(dc(3), vec![(0, 1), (0, 2)], 1).unwrap();
        let r = t.reverse();
        assert_eq!(r.topology.edges(), &[(1, 0), (2, 0)]);
        assert_eq!(r.origin, vec![0, 1]);
    }

    #[test]
    fn single_node_reverses_to_itself() {
        let t = Topology::new(dc(1), vec![], 2).unwrap();
        assert_eq!(t.reverse().topology, t);
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(Topology::new(vec![], vec![], 1).is_err());
        assert!(Topology::new(dc(2), vec![(0, 0)], 1).is_err());
        assert!(Topology::new(dc(2), vec![(0, 1), (0, 1)], 1).is_err());
        assert!(Topology::new(dc(2), vec![(0, 2)], 1).is_err());
        assert!(Topology::new(dc(2), vec![(0, 1)], 0).is_err());
    }

    fn arb_topology() -> impl Strategy<Value = Topology> {
        (2usize..12).prop_flat_map(|n| {
            prop::collection::btree_set((0..n, 0..n), 0..40).prop_map(move |set| {
                let edges: Vec<_> = set.into_iter().filter(|(s, d)| s != d).collect();
                Topology::new(dc(n), edges, 2).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn reversal_is_an_involution_on_edge_sets(t in arb_topology()) {
            let rr = t.reverse().topology.reverse().topology;
            let mut a = t.edges().to_vec();
            let mut b = rr.edges().to_vec();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            prop_assert_eq!(rr.kinds(), t.kinds());
        }

        #[test]
        fn reversed_edges_map_back_through_origin(t in arb_topology()) {
            let r = t.reverse();
            for (i, &(s, d)) in r.topology.edges().iter().enumerate() {
                prop_assert_eq!(t.edges()[r.origin[i]], (d, s));
            }
        }
    }

    #[test]
    fn nine_node_twenty_edge_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut set = std::collections::BTreeSet::new();
        while set.len() < 20 {
            let (s, d) = (rng.random_range(0..9), rng.random_range(0..9));
            if s != d {
                set.insert((s, d));
            }
        }
        let mut edges: Vec<_> = set.into_iter().collect();
        edges.sort();
        let t = Topology::new(dc(9), edges, 2).unwrap();
        assert_eq!(t.reverse().topology.reverse().topology, t);
    }
}
