use crate::netmodel::{EdgeActions, NodeKind, NodeStateMatrix, Shipment, Topology};

/// Physical state of one SKU network at the start of `week`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub week: i64,
    pub inventory: Vec<f64>,
    /// Shipments sent before `week` that arrive at or after it.
    pub pipeline: Vec<Shipment>,
}

/// What happened during one interval. `oos` is zero or negative.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub arrivals: Vec<f64>,
    pub served: Vec<f64>,
    pub oos: Vec<f64>,
    /// End-of-interval stock at distribution nodes; zero at plants.
    pub es: Vec<f64>,
    pub shipped: Vec<f64>,
}

impl SimState {
    pub fn new(week: i64, inventory: Vec<f64>, pipeline: Vec<Shipment>) -> Self {
        let pipeline = pipeline.into_iter().filter(|s| s.arrival() >= week).collect();
        Self {
            week,
            inventory,
            pipeline,
        }
    }

    pub fn node_count(&self) -> usize {
        self.inventory.len()
    }

    /// Committed supply reaching each node at `week + offset`.
    pub fn committed_arrivals(&self, offset: i64) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for s in &self.pipeline {
            if s.arrival() == self.week + offset {
                out[s.destination] += s.quantity;
            }
        }
        out
    }

    /// Units on the road.
    pub fn in_transit(&self) -> f64 {
        self.pipeline.iter().map(|s| s.quantity).sum()
    }

    /// `Y_v` for this interval given its demand and production.
    pub fn capability(&self, kinds: &[NodeKind], demand: &[f64], production: &[f64]) -> Vec<f64> {
        let s = self.committed_arrivals(0);
        (0..self.node_count())
            .map(|v| match kinds[v] {
                NodeKind::Distribution => (self.inventory[v] + s[v] - demand[v]).max(0.0),
                NodeKind::Production => (self.inventory[v] + s[v] + production[v]).max(0.0),
            })
            .collect()
    }

    /// Imbalance profiles from predicted demand (distribution nodes) and
    /// planned production (plants); `outlook[v][h]` covers `week + h`.
    pub fn features(&self, kinds: &[NodeKind], k: usize, outlook: &[&[f64]]) -> NodeStateMatrix {
        let n = self.node_count();
        let arrivals: Vec<Vec<f64>> = (0..k.saturating_sub(1) as i64).map(|h| self.committed_arrivals(h)).collect();
        let mut values = Vec::with_capacity(n * k);
        for v in 0..n {
            let mut f = self.inventory[v];
            values.push(f);
            for (h, arr) in arrivals.iter().enumerate() {
                f = match kinds[v] {
                    NodeKind::Distribution => f + arr[v] - outlook[v][h],
                    NodeKind::Production => f + (arr[v] + outlook[v][h]),
                };
                values.push(f);
            }
        }
        NodeStateMatrix::new(k, values).expect("k ≥ 1")
    }

    /// Executes one interval: sends `shipments`, receives everything due,
    /// serves demand with lost sales, and moves to the next week.
    pub fn advance(
        &mut self,
        kinds: &[NodeKind],
        shipments: &[Shipment],
        demand: &[f64],
        production: &[f64],
    ) -> StepOutcome {
        let n = self.node_count();
        let mut shipped = vec![0.0; n];
        for s in shipments {
            debug_assert_eq!(s.send_time, self.week);
            shipped[s.source] += s.quantity;
            self.pipeline.push(s.clone());
        }
        let arrivals = self.committed_arrivals(0);
        let mut out = StepOutcome {
            arrivals,
            served: vec![0.0; n],
            oos: vec![0.0; n],
            es: vec![0.0; n],
            shipped,
        };
        for v in 0..n {
            let (i, s, a) = (self.inventory[v], out.arrivals[v], out.shipped[v]);
            self.inventory[v] = match kinds[v] {
                NodeKind::Distribution => {
                    let net = i + s - demand[v];
                    out.oos[v] = net.min(0.0);
                    out.served[v] = demand[v] + out.oos[v];
                    let next = net.max(0.0) - a;
                    out.es[v] = next.max(0.0);
                    next
                }
                NodeKind::Production => i + production[v] + s - a,
            };
        }
        let week = self.week;
        self.pipeline.retain(|s| s.arrival() > week);
        self.week += 1;
        out
    }
}

/// Scales down each node's outgoing actions so they fit `capability`.
/// Returns the number of nodes that had to be scaled.
pub fn reproject(actions: &mut EdgeActions, topo: &Topology, capability: &[f64]) -> usize {
    let m = actions.mot_count();
    let mut touched = 0;
    for v in 0..topo.node_count() {
        let out = actions.outgoing(topo, v);
        if out > capability[v] {
            touched += 1;
            let f = if out > 0.0 { capability[v] / out } else { 0.0 };
            for &e in topo.out_edges(v) {
                for k in 0..m {
                    actions.set(e, k, actions.get(e, k) * f);
                }
            }
        }
    }
    touched
}

/// Turns per-edge quantities into shipments, dropping zeros.
pub fn to_shipments(
    actions: &EdgeActions,
    topo: &Topology,
    week: i64,
    mut lead_time: impl FnMut(usize, usize) -> u32,
) -> Vec<Shipment> {
    let mut out = Vec::new();
    for (e, &(s, d)) in topo.edges().iter().enumerate() {
        for k in 0..actions.mot_count() {
            let q = actions.get(e, k);
            if q > 0.0 {
                out.push(Shipment {
                    send_time: week,
                    source: s,
                    destination: d,
                    mot: k,
                    quantity: q,
                    lead_time: lead_time(e, k),
                });
            }
        }
    }
    out
}
