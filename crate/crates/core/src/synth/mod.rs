//! Synthetic SKU networks and logged histories in the dataset schema.
//!
//! Each SKU gets a layered plant-to-DC graph, seasonal demand, a production
//! schedule sized to expected demand, and a year-plus of history rolled out
//! under a noisy rule-based policy. Quantities in the log are whole units.

use crate::baselines::{RulePolicy, SupplyProportions};
use crate::netmodel::{
    EdgeActions, NodeKind, RawDataset, RawEdge, RawNode, RawNodeWeek, RawShipment, RawTopology, RawWeek, Split,
    Topology, FORMAT_VERSION,
};
use crate::sim::{derive_seed, lognormal_factor, sigma_for_wmape, wmape_profile, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

pub const MOT_NAMES: [&str; 2] = ["truckload", "intermodal"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub sku_count: usize,
    pub nodes_min: usize,
    pub nodes_max: usize,
    /// Median of the (clamped, log-normal) node-count distribution.
    pub nodes_median: f64,
    pub nodes_log_sd: f64,
    /// Mean extra parents per DC beyond the first.
    pub extra_parents: f64,
    pub edges_max: usize,
    /// Roughly one plant per this many nodes.
    pub nodes_per_plant: usize,
    /// Probability that an edge's dominant MOT is truckload.
    pub truckload_share: f64,
    /// `(lead time, weight)` supports per MOT.
    pub lead_times: Vec<Vec<(u32, f64)>>,
    pub demand_base: f64,
    pub demand_base_log_sd: f64,
    pub seasonality: f64,
    pub demand_noise: f64,
    /// Expected production over expected demand.
    pub production_ratio: f64,
    pub production_noise: f64,
    pub dos_range: (f64, f64),
    pub price_median: f64,
    pub train_weeks: usize,
    pub validation_weeks: usize,
    pub test_weeks: usize,
    /// Forecast and production-plan length.
    pub forecast_steps: usize,
    pub wmape_first: f64,
    pub wmape_last: f64,
    /// Log-scale SD of multiplicative action jitter.
    pub behavior_jitter: f64,
    pub drop_prob: f64,
    pub double_prob: f64,
    /// Probability that a DC's first parent is a plant.
    pub plant_parent_prob: f64,
    /// Plant stock target in weeks of expected output.
    pub plant_cover_weeks: f64,
    /// Weeks over which production works off a plant's stock gap.
    pub production_catchup: usize,
    /// Chance per 13-week block that one redundant edge goes inactive.
    pub topology_churn: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            sku_count: 20,
            nodes_min: 2,
            nodes_max: 20,
            nodes_median: 9.0,
            nodes_log_sd: 0.45,
            extra_parents: 2.4,
            edges_max: 60,
            nodes_per_plant: 6,
            truckload_share: 0.8,
            lead_times: vec![vec![(0, 0.2), (1, 0.5), (2, 0.3)], vec![(2, 0.3), (3, 0.4), (4, 0.3)]],
            demand_base: 100.0,
            demand_base_log_sd: 0.6,
            seasonality: 0.25,
            demand_noise: 0.2,
            production_ratio: 1.0,
            production_noise: 0.1,
            dos_range: (1.0, 2.0),
            price_median: 10.0,
            train_weeks: 60,
            validation_weeks: 17,
            test_weeks: 26,
            forecast_steps: 15,
            wmape_first: 0.3,
            wmape_last: 0.5,
            behavior_jitter: 0.3,
            drop_prob: 0.1,
            double_prob: 0.1,
            plant_parent_prob: 0.8,
            plant_cover_weeks: 2.0,
            production_catchup: 4,
            topology_churn: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Full-length history split 78/17/26.
    pub fn full_scale() -> Self {
        Self {
            train_weeks: 78,
            ..Self::default()
        }
    }

    pub fn total_weeks(&self) -> usize {
        self.train_weeks + self.validation_weeks + self.test_weeks
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.into()));
        if self.sku_count == 0 {
            return bad("sku_count must be positive");
        }
        if self.nodes_min < 2 || self.nodes_max < self.nodes_min {
            return bad("node range must satisfy 2 <= nodes_min <= nodes_max");
        }
        if self.edges_max < self.nodes_max - 1 {
            return bad("edges_max cannot connect nodes_max nodes");
        }
        if !(self.production_ratio > 0.0) {
            return bad("production_ratio must be positive");
        }
        if !(self.demand_base > 0.0) {
            return bad("demand_base must be positive");
        }
        if self.lead_times.len() != MOT_NAMES.len() || self.lead_times.iter().any(|l| l.is_empty()) {
            return bad("lead_times needs one nonempty support per MOT");
        }
        if self.lead_times.iter().flatten().any(|&(_, w)| !(w >= 0.0)) {
            return bad("lead-time weights must be nonnegative");
        }
        if self.train_weeks == 0 || self.forecast_steps == 0 {
            return bad("train_weeks and forecast_steps must be positive");
        }
        if self.production_catchup == 0 || self.plant_cover_weeks < 0.0 {
            return bad("production_catchup must be positive and plant_cover_weeks nonnegative");
        }
        for p in [self.plant_parent_prob, self.truckload_share, self.drop_prob, self.double_prob, self.topology_churn] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.drop_prob + self.double_prob > 1.0 {
            return bad("drop_prob + double_prob must not exceed 1");
        }
        if self.dos_range.0 < 0.0 || self.dos_range.1 < self.dos_range.0 {
            return bad("dos_range must be a nonnegative interval");
        }
        if self.wmape_first < 0.0 || self.wmape_last < self.wmape_first {
            return bad("wmape profile must be nonnegative and nondecreasing");
        }
        Ok(())
    }
}

/// Ground truth for one SKU.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub sku: String,
    pub price: f64,
    pub kinds: Vec<NodeKind>,
    pub names: Vec<String>,
    pub dos: Vec<f64>,
    /// Full edge set first; alternates drop one redundant edge.
    pub topologies: Vec<Arc<Topology>>,
    /// Active topology per week.
    pub schedule: Vec<usize>,
    pub edge_mot: BTreeMap<(usize, usize), usize>,
    pub shares: BTreeMap<usize, Vec<(usize, f64)>>,
    /// Realized demand per node over the history plus forecast tail.
    pub demand: Vec<Vec<f64>>,
    /// Expected production per node over the same span.
    pub production_base: Vec<Vec<f64>>,
    /// Multiplicative noise on planned production per week of history.
    pub production_factor: Vec<Vec<f64>>,
    /// Plant stock the production plan steers toward.
    pub plant_target: Vec<f64>,
    pub initial_inventory: Vec<f64>,
}

fn sample_support<R: Rng + ?Sized>(support: &[(u32, f64)], rng: &mut R) -> u32 {
    let total: f64 = support.iter().map(|p| p.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(l, w) in support {
        if u < w {
            return l;
        }
        u -= w;
    }
    support[support.len() - 1].0
}

fn node_count<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> usize {
    let z: f64 = StandardNormal.sample(rng);
    let n = (cfg.nodes_median.ln() + cfg.nodes_log_sd * z).exp().round() as usize;
    n.clamp(cfg.nodes_min, cfg.nodes_max)
}

/// Samples one SKU's topology, processes, and schedules.
pub fn gen_world(cfg: &GenConfig, sku: usize) -> Result<World, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[sku as u64, 1]));
    let n = node_count(cfg, &mut rng);
    let plants = (n / cfg.nodes_per_plant.max(1)).clamp(1, n - 1);
    let kinds: Vec<NodeKind> = (0..n)
        .map(|v| if v < plants { NodeKind::Production } else { NodeKind::Distribution })
        .collect();
    let names = (0..n)
        .map(|v| if v < plants { format!("P{v}") } else { format!("D{v}") })
        .collect();

    // each DC draws parents among lower-indexed nodes, so a chain back to a
    // plant always exists
    let mut edges = Vec::new();
    for c in plants..n {
        let mut extra = 0usize;
        while rng.random::<f64>() < cfg.extra_parents / (1.0 + cfg.extra_parents) {
            extra += 1;
        }
        let want = (1 + extra).min(c);
        let mut pool: Vec<usize> = (0..c).collect();
        let mut chosen = Vec::with_capacity(want);
        let first = if rng.random::<f64>() < cfg.plant_parent_prob || c == plants {
            rng.random_range(0..plants)
        } else {
            rng.random_range(plants..c)
        };
        chosen.push(first);
        pool.retain(|&p| p != first);
        while chosen.len() < want && !pool.is_empty() {
            let i = rng.random_range(0..pool.len());
            chosen.push(pool.swap_remove(i));
        }
        chosen.sort_unstable();
        for p in chosen {
            edges.push((p, c));
        }
    }
    // trim to the edge cap while keeping one parent per DC
    while edges.len() > cfg.edges_max {
        let idx = (0..edges.len())
            .rev()
            .find(|&i| edges.iter().filter(|e| e.1 == edges[i].1).count() > 1)
            .expect("redundant edge exists above the cap");
        edges.remove(idx);
    }
    let full = Topology::new(kinds.clone(), edges.clone(), MOT_NAMES.len()).map_err(|e| GenError::Config(e.to_string()))?;
    let mut topologies = vec![Arc::new(full)];
    let redundant: Vec<usize> = (0..edges.len())
        .filter(|&i| edges.iter().filter(|e| e.1 == edges[i].1).count() > 1)
        .collect();
    let total = cfg.total_weeks();
    let mut schedule = vec![0usize; total];
    if cfg.topology_churn > 0.0 && !redundant.is_empty() {
        let drop = redundant[rng.random_range(0..redundant.len())];
        let mut e2 = edges.clone();
        e2.remove(drop);
        topologies.push(Arc::new(
            Topology::new(kinds.clone(), e2, MOT_NAMES.len()).map_err(|e| GenError::Config(e.to_string()))?,
        ));
        for block in schedule.chunks_mut(13) {
            if rng.random::<f64>() < cfg.topology_churn {
                block.fill(1);
            }
        }
    }

    let mut edge_mot = BTreeMap::new();
    let mut shares: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for &(p, c) in &edges {
        edge_mot.insert((p, c), if rng.random::<f64>() < cfg.truckload_share { 0 } else { 1 });
        let w = if p < plants { 1.0 + rng.random::<f64>() } else { 0.2 + 0.3 * rng.random::<f64>() };
        shares.entry(c).or_default().push((p, w));
    }

    let dos: Vec<f64> = kinds
        .iter()
        .map(|k| match k {
            NodeKind::Production => 0.0,
            NodeKind::Distribution => rng.random_range(cfg.dos_range.0..=cfg.dos_range.1),
        })
        .collect();
    let zp: f64 = StandardNormal.sample(&mut rng);
    let price = cfg.price_median * (0.5 * zp).exp();

    let span = total + cfg.forecast_steps;
    let mut demand = vec![vec![0.0; span]; n];
    let mut expected_total = vec![0.0; span];
    for v in plants..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let base = cfg.demand_base * (cfg.demand_base_log_sd * z).exp();
        let phase = rng.random::<f64>() * 52.0;
        for t in 0..span {
            let mean = base * (1.0 + cfg.seasonality * (std::f64::consts::TAU * (t as f64 + phase) / 52.0).sin());
            expected_total[t] += mean;
            demand[v][t] = (mean * lognormal_factor(&mut rng, cfg.demand_noise)).round();
        }
    }
    let weights: Vec<f64> = (0..plants).map(|_| 0.5 + rng.random::<f64>()).collect();
    let wsum: f64 = weights.iter().sum();
    let mut production_base = vec![vec![0.0; span]; n];
    let mut production_factor = vec![vec![1.0; total]; n];
    let mut plant_target = vec![0.0; n];
    for p in 0..plants {
        for t in 0..span {
            production_base[p][t] = cfg.production_ratio * expected_total[t] * weights[p] / wsum;
            if t < total {
                production_factor[p][t] = lognormal_factor(&mut rng, cfg.production_noise);
            }
        }
        plant_target[p] = cfg.plant_cover_weeks * production_base[p][0];
    }
    let mut initial_inventory = vec![0.0; n];
    for v in 0..n {
        initial_inventory[v] = match kinds[v] {
            NodeKind::Production => plant_target[v].round(),
            NodeKind::Distribution => (demand[v][0] * (1.0 + dos[v])).round(),
        };
    }
    Ok(World {
        sku: format!("SKU-{sku:03}"),
        price,
        kinds,
        names,
        dos,
        topologies,
        schedule,
        edge_mot,
        shares,
        demand,
        production_base,
        production_factor,
        plant_target,
        initial_inventory,
    })
}

/// `forecast[t][h] = truth[t + h] · noise` with mean-one lognormal noise
/// matched to `profile[h]`.
pub fn gen_forecasts<R: Rng + ?Sized>(truth: &[f64], weeks: usize, profile: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let sigma: Vec<f64> = profile.iter().map(|&w| sigma_for_wmape(w)).collect();
    (0..weeks)
        .map(|t| {
            sigma
                .iter()
                .enumerate()
                .map(|(h, &s)| truth.get(t + h).copied().unwrap_or(0.0) * lognormal_factor(rng, s))
                .collect()
        })
        .collect()
}

/// `Σ|f − a| / Σ a`; `None` when actuals sum to zero.
pub fn wmape(forecast: &[f64], actual: &[f64]) -> Option<f64> {
    let den: f64 = actual.iter().sum();
    if den <= 0.0 {
        return None;
    }
    Some(forecast.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>() / den)
}

/// Caps each node's outgoing whole-unit quantities at its capability.
fn integerize(actions: &mut EdgeActions, topo: &Topology, capability: &[f64]) {
    for q in actions.values_mut() {
        *q = q.max(0.0).floor();
    }
    let m = actions.mot_count();
    for v in 0..topo.node_count() {
        let cap = capability[v].floor();
        let mut excess = actions.outgoing(topo, v) - cap;
        for &e in topo.out_edges(v).iter().rev() {
            for k in (0..m).rev() {
                if excess <= 0.0 {
                    break;
                }
                let q = actions.get(e, k);
                let cut = q.min(excess);
                actions.set(e, k, q - cut);
                excess -= cut;
            }
        }
    }
}

/// Behavioral decision: the rule plus jitter and dropped or doubled lines.
fn behavior<R: Rng + ?Sized>(base: &EdgeActions, cfg: &GenConfig, rng: &mut R) -> EdgeActions {
    let mut a = base.clone();
    for q in a.values_mut() {
        if *q <= 0.0 {
            continue;
        }
        let u = rng.random::<f64>();
        let f = lognormal_factor(rng, cfg.behavior_jitter);
        *q = if u < cfg.drop_prob {
            0.0
        } else if u < cfg.drop_prob + cfg.double_prob {
            2.0 * *q * f
        } else {
            *q * f
        };
    }
    a
}

/// Plan issued at week `t`: expected output corrected toward the plant's
/// stock target over the catch-up window. Zero at distribution nodes.
fn production_plan(world: &World, cfg: &GenConfig, inventory: &[f64], v: usize, t: usize) -> Vec<f64> {
    if world.kinds[v] != NodeKind::Production {
        return vec![0.0; cfg.forecast_steps];
    }
    let gap = (world.plant_target[v] - inventory[v]) / cfg.production_catchup as f64;
    (0..cfg.forecast_steps)
        .map(|h| {
            let base = world.production_base[v][t + h];
            let adj = if h < cfg.production_catchup { base + gap } else { base };
            adj.max(0.0).round()
        })
        .collect()
}

/// Rolls `world` forward under the behavioral policy and returns the logged
/// dataset in raw units.
pub fn gen_history(world: &World, cfg: &GenConfig, sku: usize) -> RawDataset {
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[sku as u64, 2, k]));
    let (mut fc_rng, mut rule_rng, mut noise_rng, mut lead_rng) = (stream(0), stream(1), stream(2), stream(3));
    let n = world.kinds.len();
    let total = cfg.total_weeks();
    let profile = wmape_profile(cfg.wmape_first, cfg.wmape_last, cfg.forecast_steps);
    let forecasts: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|v| match world.kinds[v] {
            NodeKind::Distribution => gen_forecasts(&world.demand[v], total, &profile, &mut fc_rng),
            NodeKind::Production => vec![vec![0.0; cfg.forecast_steps]; total],
        })
        .collect();
    let rule = RulePolicy {
        dos: world.dos.clone(),
        proportions: SupplyProportions::new(world.shares.clone(), world.edge_mot.clone()),
    };
    let mut state = SimState::new(0, world.initial_inventory.clone(), Vec::new());
    let mut weeks = Vec::with_capacity(total);
    let mut shipments = Vec::new();
    for t in 0..total {
        let topo = &world.topologies[world.schedule[t]];
        let demand: Vec<f64> = (0..n)
            .map(|v| if world.kinds[v] == NodeKind::Distribution { world.demand[v][t] } else { 0.0 })
            .collect();
        let plans: Vec<Vec<f64>> = (0..n).map(|v| production_plan(world, cfg, &state.inventory, v, t)).collect();
        let production: Vec<f64> = (0..n)
            .map(|v| (plans[v][0] * world.production_factor[v][t]).round())
            .collect();
        let capability = state.capability(&world.kinds, &demand, &production);
        let fc: Vec<&[f64]> = forecasts.iter().map(|f| f[t].as_slice()).collect();
        let decided = rule.step(topo, &state.inventory, &fc, &capability, &mut rule_rng).actions;
        let mut a = behavior(&decided, cfg, &mut noise_rng);
        integerize(&mut a, topo, &capability);
        let mut sent = Vec::new();
        for (e, &(s, d)) in topo.edges().iter().enumerate() {
            for k in 0..a.mot_count() {
                let q = a.get(e, k);
                if q > 0.0 {
                    sent.push(crate::netmodel::Shipment {
                        send_time: t as i64,
                        source: s,
                        destination: d,
                        mot: k,
                        quantity: q,
                        lead_time: sample_support(&cfg.lead_times[k], &mut lead_rng),
                    });
                }
            }
        }
        let inventory = state.inventory.clone();
        let out = state.advance(&world.kinds, &sent, &demand, &production);
        let split = if t < cfg.train_weeks {
            Split::Train
        } else if t < cfg.train_weeks + cfg.validation_weeks {
            Split::Validation
        } else {
            Split::Test
        };
        weeks.push(RawWeek {
            week: t as i64,
            split,
            topology: world.schedule[t] as u32,
            nodes: (0..n)
                .map(|v| RawNodeWeek {
                    inventory: inventory[v],
                    demand: demand[v],
                    forecast: forecasts[v][t].clone(),
                    production: production[v],
                    production_plan: plans[v].clone(),
                    lost_sales: -out.oos[v],
                })
                .collect(),
        });
        shipments.extend(sent);
    }
    let topologies = world
        .topologies
        .iter()
        .enumerate()
        .map(|(id, t)| RawTopology {
            id: id as u32,
            edges: t
                .edges()
                .iter()
                .map(|&(s, d)| RawEdge {
                    src: world.names[s].clone(),
                    dst: world.names[d].clone(),
                })
                .collect(),
        })
        .collect();
    RawDataset {
        format_version: FORMAT_VERSION,
        sku: world.sku.clone(),
        price: world.price,
        mot_names: MOT_NAMES.iter().map(|s| s.to_string()).collect(),
        nodes: (0..n)
            .map(|v| RawNode {
                name: world.names[v].clone(),
                kind: world.kinds[v],
                dos_weeks: world.dos[v],
            })
            .collect(),
        topologies,
        weeks,
        shipments: shipments
            .into_iter()
            .map(|s| RawShipment {
                send_week: s.send_time,
                src: world.names[s.source].clone(),
                dst: world.names[s.destination].clone(),
                mot: MOT_NAMES[s.mot].to_string(),
                quantity: s.quantity,
                lead_time: s.lead_time,
            })
            .collect(),
    }
}

/// Every SKU of the corpus, in SKU order.
pub fn generate(cfg: &GenConfig) -> Result<Vec<RawDataset>, GenError> {
    cfg.validate()?;
    (0..cfg.sku_count)
        .into_par_iter()
        .map(|s| gen_world(cfg, s).map(|w| gen_history(&w, cfg, s)))
        .collect()
}
