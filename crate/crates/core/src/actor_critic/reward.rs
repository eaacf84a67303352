use crate::netmodel::{EdgeActions, NodeKind, NodeStateMatrix, Topology};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid risk preference: {0}")]
pub struct RiskError(pub String);

/// `(c1, c2, f_ref)`: excess-stock slope, out-of-stock slope, reference level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPreference {
    pub c1: f64,
    pub c2: f64,
    pub f_ref: f64,
}

impl RiskPreference {
    pub fn new(c1: f64, c2: f64, f_ref: f64) -> Result<Self, RiskError> {
        let r = Self { c1, c2, f_ref };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.f_ref >= 0.0)
            || !(self.c1.is_finite() && self.c2.is_finite() && self.f_ref.is_finite())
        {
            return Err(RiskError(format!("{self:?}: need c1 > 0, c2 > 0, f_ref >= 0")));
        }
        Ok(())
    }

    /// The twelve-policy grid: `(c1, c2) ∈ {(10, 10), (2, 10)}` × `f_ref ∈ {0.0, …, 0.5}`.
    pub fn default_grid() -> Vec<RiskPreference> {
        let mut out = Vec::with_capacity(12);
        for (c1, c2) in [(10.0, 10.0), (2.0, 10.0)] {
            for i in 0..6 {
                out.push(RiskPreference {
                    c1,
                    c2,
                    f_ref: i as f64 / 10.0,
                });
            }
        }
        out
    }
}

/// Piecewise-linear node reward with peak 1 at `f_ref` and floor −1.
pub fn node_reward(f: f64, r: &RiskPreference) -> f64 {
    if f >= r.f_ref {
        (1.0 - r.c1 * (f - r.f_ref)).max(-1.0)
    } else {
        (1.0 - r.c2 * (r.f_ref - f)).max(-1.0)
    }
}

/// Sum of node rewards on the furthest-ahead entry of the successor state.
pub fn network_reward(x_next: &NodeStateMatrix, r: &RiskPreference) -> f64 {
    (0..x_next.node_count()).map(|v| node_reward(x_next.last(v), r)).sum()
}

/// Which nodes contribute to the network reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScope {
    #[default]
    AllNodes,
    /// Distribution nodes only; plants carry no reward of their own.
    Distribution,
}

/// [`network_reward`] restricted to `scope`.
pub fn scoped_reward(x_next: &NodeStateMatrix, topo: &Topology, r: &RiskPreference, scope: RewardScope) -> f64 {
    match scope {
        RewardScope::AllNodes => network_reward(x_next, r),
        RewardScope::Distribution => (0..x_next.node_count())
            .filter(|&v| topo.kind(v) == NodeKind::Distribution)
            .map(|v| node_reward(x_next.last(v), r))
            .sum(),
    }
}

/// `−(1/|V|) Σ_v (min(f_v[K−1] − f_ref, 0) + incoming_v)²`.
pub fn behavioral_regularizer(x: &NodeStateMatrix, a: &EdgeActions, topo: &Topology, r: &RiskPreference) -> f64 {
    let n = x.node_count();
    let total: f64 = (0..n)
        .map(|v| {
            let short = (x.last(v) - r.f_ref).min(0.0);
            (short + a.incoming(topo, v)).powi(2)
        })
        .sum();
    -total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::NodeKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const FIG_A: RiskPreference = RiskPreference {
        c1: 2.0,
        c2: 5.0,
        f_ref: 0.2,
    };

    #[test]
    fn caption_examples() {
        assert_eq!(node_reward(0.2, &FIG_A), 1.0);
        assert!((node_reward(0.7, &FIG_A) - 0.0).abs() < 1e-15);
        assert!((node_reward(0.0, &FIG_A) - 0.0).abs() < 1e-15);
        assert_eq!(node_reward(1.5, &FIG_A), -1.0);
    }

    #[test]
    fn grid_has_twelve_valid_entries() {
        let g = RiskPreference::default_grid();
        assert_eq!(g.len(), 12);
        assert!(g.iter().all(|r| r.validate().is_ok()));
        assert_eq!(g[5].f_ref, 0.5);
        assert_eq!((g[6].c1, g[6].c2), (2.0, 10.0));
        assert!(RiskPreference::new(0.0, 1.0, 0.0).is_err());
        assert!(RiskPreference::new(1.0, 1.0, -0.1).is_err());
    }

    fn states(rows: &[f64]) -> NodeStateMatrix {
        NodeStateMatrix::new(2, rows.iter().flat_map(|&f| [0.0, f]).collect()).unwrap()
    }

    #[test]
    fn network_reward_extremes_and_mixture() {
        let n = 4;
        assert_eq!(network_reward(&states(&vec![0.2; n]), &FIG_A), n as f64);
        assert_eq!(network_reward(&states(&vec![5.0; n]), &FIG_A), -(n as f64));
        let fs = [0.1, 0.45, -0.3];
        let want: f64 = fs.iter().map(|&f| node_reward(f, &FIG_A)).sum();
        assert_eq!(network_reward(&states(&fs), &FIG_A), want);
    }

    fn one_node(f: f64) -> (NodeStateMatrix, Topology) {
        let t = Topology::new(vec![NodeKind::Distribution, NodeKind::Distribution], vec![(1, 0)], 1).unwrap();
        (NodeStateMatrix::new(1, vec![f, 10.0]).unwrap(), t)
    }

    #[test]
    fn regularizer_examples() {
        let r = RiskPreference::new(1.0, 1.0, 0.5).unwrap();
        // node 0 short by 0.3 and fed 0.3; node 1 far above f_ref with no inflow
        let (x, t) = one_node(0.2);
        let a = EdgeActions::from_values(1, 1, vec![0.3]).unwrap();
        assert!(behavioral_regularizer(&x, &a, &t, &r).abs() < 1e-15);
        let (x, t) = one_node(0.9);
        let a = EdgeActions::from_values(1, 1, vec![0.1]).unwrap();
        assert!((behavioral_regularizer(&x, &a, &t, &r) - (-0.01 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn regularizer_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                if s != d && rng.random_bool(0.4) {
                    edges.push((s, d));
                }
            }
        }
        let t = Topology::new(vec![NodeKind::Distribution; n], edges.clone(), 2).unwrap();
        let x = NodeStateMatrix::new(3, (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = EdgeActions::from_values(edges.len(), 2, (0..edges.len() * 2).map(|_| rng.random_range(0.0..0.5)).collect()).unwrap();
        let r = RiskPreference::new(10.0, 10.0, 0.3).unwrap();
        let mut want = 0.0;
        for v in 0..n {
            let mut inc = 0.0;
            for (e, &(_, d)) in edges.iter().enumerate() {
                if d == v {
                    inc += a.get(e, 0) + a.get(e, 1);
                }
            }
            let short = if x.last(v) < r.f_ref { x.last(v) - r.f_ref } else { 0.0 };
            want += (short + inc) * (short + inc);
        }
        want = -want / n as f64;
        assert!((behavioral_regularizer(&x, &a, &t, &r) - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reward_shape(c1 in 0.1f64..20.0, c2 in 0.1f64..20.0, f_ref in 0.0f64..1.0, f in -3.0f64..3.0, d in 1e-6f64..0.5) {
            let r = RiskPreference::new(c1, c2, f_ref).unwrap();
            let y = node_reward(f, &r);
            prop_assert!((-1.0..=1.0).contains(&y));
            if f != f_ref {
                prop_assert!(y < 1.0);
            }
            // monotone away from the peak on each side
            if f >= f_ref {
                prop_assert!(node_reward(f + d, &r) <= y);
            } else {
                prop_assert!(node_reward(f - d, &r) <= y);
            }
        }

        #[test]
        fn regularizer_is_nonpositive(f in -2.0f64..2.0, inc in 0.0f64..2.0, f_ref in 0.0f64..0.5) {
            let (x, t) = one_node(f);
            let a = EdgeActions::from_values(1, 1, vec![inc]).unwrap();
            let r = RiskPreference::new(1.0, 1.0, f_ref).unwrap();
            prop_assert!(behavioral_regularizer(&x, &a, &t, &r) <= 0.0);
        }
    }
}
