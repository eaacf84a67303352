//! On-disk dataset schema (raw units) and its scaled, dense-indexed form.
//!
//! One JSON document per SKU:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "sku": "SKU-000",
//!   "price": 3.5,
//!   "mot_names": ["truckload", "intermodal"],
//!   "nodes": [{"name": "P0", "kind": "PRODUCTION", "dos_weeks": 0.0}, ...],
//!   "topologies": [{"id": 0, "edges": [{"src": "P0", "dst": "D1"}, ...]}],
//!   "weeks": [{
//!     "week": 0, "split": "train", "topology": 0,
//!     "nodes": [{"inventory": 120.0, "demand": 30.0, "forecast": [...],
//!                "production": 0.0, "production_plan": [...], "lost_sales": 0.0}, ...]
//!   }, ...],
//!   "shipments": [{"send_week": 0, "src": "P0", "dst": "D1", "mot": "truckload",
//!                  "quantity": 40.0, "lead_time": 1}, ...]
//! }
//! ```
//!
//! Per-week node records follow the order of `nodes`. `inventory` is on hand
//! at the start of the week, `demand` is the realized customer demand,
//! `forecast[h]` is the demand for week `week + h` as predicted at `week`,
//! `production_plan[h]` is the planned production for `week + h`, and
//! `lost_sales` is the nonnegative unmet demand of the week.

use super::{EdgeActions, NetError, NodeKind, NodeStateMatrix, SendWindow, Shipment, ShipmentLog, SkuScaler, Topology};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawNode {
    pub name: String,
    pub kind: NodeKind,
    pub dos_weeks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEdge {
    pub src: String,
    pub dst: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTopology {
    pub id: u32,
    pub edges: Vec<RawEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawNodeWeek {
    pub inventory: f64,
    pub demand: f64,
    pub forecast: Vec<f64>,
    pub production: f64,
    pub production_plan: Vec<f64>,
    pub lost_sales: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawWeek {
    pub week: i64,
    pub split: Split,
    pub topology: u32,
    pub nodes: Vec<RawNodeWeek>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawShipment {
    pub send_week: i64,
    pub src: String,
    pub dst: String,
    pub mot: String,
    pub quantity: f64,
    pub lead_time: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub format_version: u32,
    pub sku: String,
    pub price: f64,
    pub mot_names: Vec<String>,
    pub nodes: Vec<RawNode>,
    pub topologies: Vec<RawTopology>,
    pub weeks: Vec<RawWeek>,
    pub shipments: Vec<RawShipment>,
}

impl RawDataset {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let raw: RawDataset = serde_json::from_str(text).map_err(|e| NetError::Dataset(e.to_string()))?;
        if raw.format_version != FORMAT_VERSION {
            return Err(NetError::Dataset(format!(
                "unsupported format_version {}",
                raw.format_version
            )));
        }
        Ok(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    /// Scaler from the maximum inventory over training weeks.
    pub fn fit_scaler(&self) -> Result<SkuScaler, NetError> {
        let max = self
            .weeks
            .iter()
            .filter(|w| w.split == Split::Train)
            .flat_map(|w| w.nodes.iter().map(|n| n.inventory))
            .fold(0.0f64, f64::max);
        SkuScaler::new(max)
    }
}

/// One node-week in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct WeekRecord {
    pub week: i64,
    pub split: Split,
    pub topology: usize,
    pub inventory: Vec<f64>,
    pub demand: Vec<f64>,
    pub forecast: Vec<Vec<f64>>,
    pub production: Vec<f64>,
    pub production_plan: Vec<Vec<f64>>,
    pub lost_sales: Vec<f64>,
}

/// A logged offline sample `(x, a, x', a')` on one SKU-week snapshot.
#[derive(Clone, Debug)]
pub struct Transition {
    pub sku: usize,
    pub week: i64,
    pub topology: Arc<Topology>,
    pub x: NodeStateMatrix,
    pub a: EdgeActions,
    pub x_next: NodeStateMatrix,
    pub a_next: EdgeActions,
}

/// One SKU in scaled units with dense node ids.
#[derive(Clone, Debug)]
pub struct SkuData {
    pub sku: String,
    pub price: f64,
    pub scaler: SkuScaler,
    pub mot_names: Vec<String>,
    pub node_names: Vec<String>,
    pub kinds: Vec<NodeKind>,
    pub dos_weeks: Vec<f64>,
    pub topology_ids: Vec<u32>,
    pub topologies: Vec<Arc<Topology>>,
    pub weeks: Vec<WeekRecord>,
    pub shipments: ShipmentLog,
}

fn nonneg(v: f64) -> Result<f64, NetError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(NetError::NegativeQuantity(v))
    }
}

/// Scales every SKU with its entry in `scalers`.
pub fn scale_dataset(raw: &[RawDataset], scalers: &BTreeMap<String, SkuScaler>) -> Result<Vec<SkuData>, NetError> {
    raw.iter()
        .map(|r| {
            let s = scalers
                .get(&r.sku)
                .ok_or_else(|| NetError::MissingScaler(r.sku.clone()))?;
            SkuData::from_raw(r, *s)
        })
        .collect()
}

impl SkuData {
    /// Loads with the scaler fitted on the SKU's own training weeks.
    pub fn load(raw: &RawDataset) -> Result<Self, NetError> {
        Self::from_raw(raw, raw.fit_scaler()?)
    }

    pub fn from_raw(raw: &RawDataset, scaler: SkuScaler) -> Result<Self, NetError> {
        let n = raw.nodes.len();
        let mut index = BTreeMap::new();
        for (i, node) in raw.nodes.iter().enumerate() {
            if index.insert(node.name.as_str(), i).is_some() {
                return Err(NetError::Dataset(format!("duplicate node name `{}`", node.name)));
            }
            nonneg(node.dos_weeks)?;
        }
        let lookup = |name: &str| -> Result<usize, NetError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| NetError::Dataset(format!("undeclared node `{name}`")))
        };
        let mot_count = raw.mot_names.len();
        let kinds: Vec<NodeKind> = raw.nodes.iter().map(|n| n.kind).collect();

        let mut topology_ids = Vec::new();
        let mut topologies = Vec::new();
        for t in &raw.topologies {
            let edges = t
                .edges
                .iter()
                .map(|e| Ok((lookup(&e.src)?, lookup(&e.dst)?)))
                .collect::<Result<Vec<_>, NetError>>()?;
            topology_ids.push(t.id);
            topologies.push(Arc::new(Topology::new(kinds.clone(), edges, mot_count)?));
        }

        let mut weeks = Vec::with_capacity(raw.weeks.len());
        for (i, w) in raw.weeks.iter().enumerate() {
            if i > 0 && w.week != raw.weeks[0].week + i as i64 {
                return Err(NetError::Dataset(format!("week {} is out of sequence", w.week)));
            }
            if w.nodes.len() != n {
                return Err(NetError::LengthMismatch {
                    expected: n,
                    got: w.nodes.len(),
                });
            }
            let topology = topology_ids
                .iter()
                .position(|&id| id == w.topology)
                .ok_or_else(|| NetError::Dataset(format!("unknown topology id {}", w.topology)))?;
            let sc = |v: f64| nonneg(v).map(|v| scaler.scale(v));
            let scv = |v: &[f64]| v.iter().map(|&x| sc(x)).collect::<Result<Vec<_>, _>>();
            weeks.push(WeekRecord {
                week: w.week,
                split: w.split,
                topology,
                inventory: w.nodes.iter().map(|r| sc(r.inventory)).collect::<Result<_, _>>()?,
                demand: w.nodes.iter().map(|r| sc(r.demand)).collect::<Result<_, _>>()?,
                forecast: w.nodes.iter().map(|r| scv(&r.forecast)).collect::<Result<_, _>>()?,
                production: w.nodes.iter().map(|r| sc(r.production)).collect::<Result<_, _>>()?,
                production_plan: w
                    .nodes
                    .iter()
                    .map(|r| scv(&r.production_plan))
                    .collect::<Result<_, _>>()?,
                lost_sales: w.nodes.iter().map(|r| sc(r.lost_sales)).collect::<Result<_, _>>()?,
            });
        }

        let mut shipments = ShipmentLog::new(n);
        for s in &raw.shipments {
            let mot = raw
                .mot_names
                .iter()
                .position(|m| *m == s.mot)
                .ok_or_else(|| NetError::Dataset(format!("unknown MOT `{}`", s.mot)))?;
            shipments.push(Shipment {
                send_time: s.send_week,
                source: lookup(&s.src)?,
                destination: lookup(&s.dst)?,
                mot,
                quantity: scaler.scale(nonneg(s.quantity)?),
                lead_time: s.lead_time,
            })?;
        }

        Ok(Self {
            sku: raw.sku.clone(),
            price: nonneg(raw.price)?,
            scaler,
            mot_names: raw.mot_names.clone(),
            node_names: raw.nodes.iter().map(|n| n.name.clone()).collect(),
            kinds,
            dos_weeks: raw.nodes.iter().map(|n| n.dos_weeks).collect(),
            topology_ids,
            topologies,
            weeks,
            shipments,
        })
    }

    /// Inverse of [`SkuData::from_raw`].
    pub fn to_raw(&self) -> RawDataset {
        let s = &self.scaler;
        let un = |v: &[f64]| v.iter().map(|&x| s.unscale(x)).collect::<Vec<_>>();
        RawDataset {
            format_version: FORMAT_VERSION,
            sku: self.sku.clone(),
            price: self.price,
            mot_names: self.mot_names.clone(),
            nodes: (0..self.node_count())
                .map(|v| RawNode {
                    name: self.node_names[v].clone(),
                    kind: self.kinds[v],
                    dos_weeks: self.dos_weeks[v],
                })
                .collect(),
            topologies: self
                .topologies
                .iter()
                .zip(&self.topology_ids)
                .map(|(t, &id)| RawTopology {
                    id,
                    edges: t
                        .edges()
                        .iter()
                        .map(|&(a, b)| RawEdge {
                            src: self.node_names[a].clone(),
                            dst: self.node_names[b].clone(),
                        })
                        .collect(),
                })
                .collect(),
            weeks: self
                .weeks
                .iter()
                .map(|w| RawWeek {
                    week: w.week,
                    split: w.split,
                    topology: self.topology_ids[w.topology],
                    nodes: (0..self.node_count())
                        .map(|v| RawNodeWeek {
                            inventory: s.unscale(w.inventory[v]),
                            demand: s.unscale(w.demand[v]),
                            forecast: un(&w.forecast[v]),
                            production: s.unscale(w.production[v]),
                            production_plan: un(&w.production_plan[v]),
                            lost_sales: s.unscale(w.lost_sales[v]),
                        })
                        .collect(),
                })
                .collect(),
            shipments: self
                .shipments
                .records()
                .iter()
                .map(|r| RawShipment {
                    send_week: r.send_time,
                    src: self.node_names[r.source].clone(),
                    dst: self.node_names[r.destination].clone(),
                    mot: self.mot_names[r.mot].clone(),
                    quantity: s.unscale(r.quantity),
                    lead_time: r.lead_time,
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn mot_count(&self) -> usize {
        self.mot_names.len()
    }

    pub fn first_week(&self) -> i64 {
        self.weeks.first().map_or(0, |w| w.week)
    }

    /// Position of `week` in `weeks`.
    pub fn index_of(&self, week: i64) -> Option<usize> {
        let i = week - self.first_week();
        (i >= 0 && (i as usize) < self.weeks.len()).then_some(i as usize)
    }

    pub fn topology_at(&self, idx: usize) -> &Arc<Topology> {
        &self.topologies[self.weeks[idx].topology]
    }

    /// Weeks (by position) belonging to `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.weeks.len()).filter(|&i| self.weeks[i].split == split).collect()
    }

    /// Logged shipments sent in week `idx`, as actions on that week's topology.
    pub fn actions_at(&self, idx: usize) -> Result<EdgeActions, NetError> {
        let topo = self.topology_at(idx);
        let week = self.weeks[idx].week;
        let mut a = EdgeActions::for_topology(topo);
        for r in self.shipments.records().iter().filter(|r| r.send_time == week) {
            let e = topo.edge_index(r.source, r.destination).ok_or_else(|| {
                NetError::Dataset(format!(
                    "shipment {} -> {} in week {week} is not on an active edge",
                    self.node_names[r.source], self.node_names[r.destination]
                ))
            })?;
            a.add(e, r.mot, r.quantity);
        }
        Ok(a)
    }

    /// Logged state `x^t` with `k` features per node.
    ///
    /// Distribution nodes subtract forecast demand, production nodes add
    /// planned production; both add supply already in transit.
    pub fn state_at(&self, idx: usize, k: usize) -> Result<NodeStateMatrix, NetError> {
        let w = &self.weeks[idx];
        let mut values = Vec::with_capacity(self.node_count() * k);
        for v in 0..self.node_count() {
            let need = k.saturating_sub(1);
            let (src, label) = match self.kinds[v] {
                NodeKind::Distribution => (&w.forecast[v], "forecast"),
                NodeKind::Production => (&w.production_plan[v], "production_plan"),
            };
            if src.len() < need {
                return Err(NetError::Dataset(format!(
                    "{label} of node {} in week {} covers {} steps, need {need}",
                    self.node_names[v],
                    w.week,
                    src.len()
                )));
            }
            let mut incoming = Vec::with_capacity(need);
            let mut delta = Vec::with_capacity(need);
            for h in 0..need {
                let arrive = w.week + h as i64;
                let mut s = self.shipments.incoming_supply(v, arrive, SendWindow::Before(w.week))?;
                match self.kinds[v] {
                    NodeKind::Distribution => delta.push(src[h]),
                    NodeKind::Production => {
                        s += src[h];
                        delta.push(0.0);
                    }
                }
                incoming.push(s);
            }
            values.extend(super::imbalance_profile(w.inventory[v], &incoming, &delta)?);
        }
        NodeStateMatrix::new(k, values)
    }

    /// Every `(x^t, a^t, x^{t+1}, a^{t+1})` with both weeks in `split` and on
    /// the same topology snapshot.
    pub fn transitions(&self, sku: usize, split: Split, k: usize) -> Result<Vec<Transition>, NetError> {
        let mut out = Vec::new();
        for i in 0..self.weeks.len().saturating_sub(1) {
            let (w, w1) = (&self.weeks[i], &self.weeks[i + 1]);
            if w.split != split || w1.split != split || w.topology != w1.topology {
                continue;
            }
            out.push(Transition {
                sku,
                week: w.week,
                topology: self.topology_at(i).clone(),
                x: self.state_at(i, k)?,
                a: self.actions_at(i)?,
                x_next: self.state_at(i + 1, k)?,
                a_next: self.actions_at(i + 1)?,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RawDataset {
        let node = |inv: f64, dem: f64, prod: f64| RawNodeWeek {
            inventory: inv,
            demand: dem,
            forecast: vec![dem; 3],
            production: prod,
            production_plan: vec![prod; 3],
            lost_sales: 0.0,
        };
        RawDataset {
            format_version: FORMAT_VERSION,
            sku: "S".into(),
            price: 2.0,
            mot_names: vec!["truck".into()],
            nodes: vec![
                RawNode {
                    name: "P".into(),
                    kind: NodeKind::Production,
                    dos_weeks: 0.0,
                },
                RawNode {
                    name: "D".into(),
                    kind: NodeKind::Distribution,
                    dos_weeks: 1.0,
                },
            ],
            topologies: vec![RawTopology {
                id: 7,
                edges: vec![RawEdge {
                    src: "P".into(),
                    dst: "D".into(),
                }],
            }],
            weeks: (0..3)
                .map(|t| RawWeek {
                    week: t,
                    split: Split::Train,
                    topology: 7,
                    nodes: vec![node(1000.0, 0.0, 100.0), node(500.0, 50.0, 0.0)],
                })
                .collect(),
            shipments: vec![RawShipment {
                send_week: 0,
                src: "P".into(),
                dst: "D".into(),
                mot: "truck".into(),
                quantity: 200.0,
                lead_time: 1,
            }],
        }
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn scales_by_training_max() {
        let d = SkuData::load(&tiny()).unwrap();
        assert_eq!(d.scaler.max_inventory(), 1000.0);
        assert_eq!(d.weeks[0].inventory, vec![1.0, 0.5]);
    }

    #[test]
    fn state_includes_in_transit_supply() {
        let d = SkuData::load(&tiny()).unwrap();
        let x1 = d.state_at(1, 4).unwrap();
        // sent week 0, arrives week 1: counted from week 1's viewpoint
        close(x1.profile(1), &[0.5, 0.65, 0.6, 0.55]);
        // production node accumulates its plan
        close(x1.profile(0), &[1.0, 1.1, 1.2, 1.3]);
        // from week 0 the shipment is not yet in transit
        close(d.state_at(0, 4).unwrap().profile(1), &[0.5, 0.45, 0.4, 0.35]);
    }

    #[test]
    fn transitions_pair_consecutive_weeks() {
        let d = SkuData::load(&tiny()).unwrap();
        let tr = d.transitions(0, Split::Train, 4).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr[0].a.get(0, 0), 0.2);
        assert_eq!(tr[1].a.get(0, 0), 0.0);
    }

    #[test]
    fn json_round_trip_and_unscale() {
        let raw = tiny();
        let back = RawDataset::from_json(&raw.to_json()).unwrap();
        assert_eq!(back, raw);
        let d = SkuData::load(&raw).unwrap();
        assert_eq!(d.to_raw(), raw);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut r = tiny();
        r.shipments[0].dst = "X".into();
        assert!(SkuData::load(&r).is_err());
        let mut r = tiny();
        r.weeks[1].nodes[0].demand = -1.0;
        assert!(SkuData::load(&r).is_err());
        let mut r = tiny();
        r.weeks[2].week = 5;
        assert!(SkuData::load(&r).is_err());
        let r = tiny();
        assert!(matches!(
            scale_dataset(&[r], &BTreeMap::new()),
            Err(NetError::MissingScaler(_))
        ));
        let mut r = tiny();
        r.format_version = 99;
        assert!(RawDataset::from_json(&r.to_json()).is_err());
    }
}
