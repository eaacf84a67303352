//! Monte-Carlo planning, receding-horizon evaluation, and cost metrics.
//!
//! Quantities inside the simulator are in scaled units; costs are converted
//! back to raw units and weighted by unit price.

mod metrics;
mod sampler;
mod world;

pub use metrics::{
    histogram, percent_metrics, select_policy, validation_loss, Histogram, PercentMetrics, PercentRow,
};
pub use sampler::{
    derive_seed, lognormal_factor, sigma_for_wmape, wmape_profile, DemandSampler, LeadTimeModel, ProductionMode,
};
pub use world::{reproject, to_shipments, SimState, StepOutcome};

use crate::actor_critic::{capability_from_state, state_matrix, ShippingConstraints};
use crate::baselines::{RulePolicy, SupplyProportions};
use crate::diff::{DiffError, Matrix, Tape};
use crate::gat::GraphPair;
use crate::netmodel::{EdgeActions, NetError, NodeKind, NodeStateMatrix, SkuData, Split, Topology};
use crate::trainer::Agent;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon: {0}")]
    Horizon(String),
    #[error("no candidates to select from")]
    EmptySelection,
    #[error("missing combination: {0}")]
    Missing(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Unit excess-stock and out-of-stock costs; the unit price comes from the SKU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostObjective {
    pub name: String,
    pub c_es: f64,
    pub c_oos: f64,
}

impl CostObjective {
    pub fn new(name: &str, c_es: f64, c_oos: f64) -> Self {
        Self {
            name: name.to_string(),
            c_es,
            c_oos,
        }
    }

    /// `c_oos/c_es ∈ {1, 5}`.
    pub fn defaults() -> Vec<CostObjective> {
        vec![Self::new("ratio_1", 1.0, 1.0), Self::new("ratio_5", 1.0, 5.0)]
    }
}

/// `price·(c_es·|ES| + c_oos·|OOS|)` summed over entries.
pub fn total_cost(oos: &[f64], es: &[f64], price: f64, obj: &CostObjective) -> f64 {
    price * (obj.c_es * es.iter().map(|v| v.abs()).sum::<f64>() + obj.c_oos * oos.iter().map(|v| v.abs()).sum::<f64>())
}

/// Raw-unit cost of one simulated interval; plants carry no cost.
pub fn step_cost(out: &StepOutcome, data: &SkuData, obj: &CostObjective) -> f64 {
    let s = data.scaler.max_inventory();
    let mut oos = Vec::with_capacity(out.oos.len());
    let mut es = Vec::with_capacity(out.es.len());
    for v in 0..out.oos.len() {
        if data.kinds[v] == NodeKind::Distribution {
            oos.push(out.oos[v] * s);
            es.push(out.es[v] * s);
        }
    }
    total_cost(&oos, &es, data.price, obj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Planning horizon `J`.
    pub horizon: usize,
    /// Imbalance features per node.
    pub k: usize,
    /// Monte-Carlo draws `Z`.
    pub mc_draws: usize,
    /// Independent realizations per evaluation start week.
    pub eval_runs: usize,
    pub seed: u64,
    pub demand: DemandSampler,
    pub production: ProductionMode,
    pub constraints: ShippingConstraints,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 13,
            k: 4,
            mc_draws: 50,
            eval_runs: 1,
            seed: 0,
            demand: DemandSampler::from_wmape(&wmape_profile(0.3, 0.5, 15)),
            production: ProductionMode::Replay,
            constraints: ShippingConstraints::default(),
        }
    }
}

/// Per-SKU data plus everything fitted on its training weeks.
pub struct SkuContext<'a> {
    pub index: usize,
    pub data: &'a SkuData,
    pub lead_times: LeadTimeModel,
    pub rule: RulePolicy,
    graphs: Mutex<BTreeMap<(usize, usize), Arc<GraphPair>>>,
}

impl<'a> SkuContext<'a> {
    pub fn new(index: usize, data: &'a SkuData) -> Self {
        let train = data.split_indices(Split::Train);
        let (from, to) = match (train.first(), train.last()) {
            (Some(&a), Some(&b)) => (data.weeks[a].week, data.weeks[b].week + 1),
            _ => (i64::MIN, i64::MAX),
        };
        Self {
            index,
            data,
            lead_times: LeadTimeModel::fit(&data.shipments, from, to, 1),
            rule: RulePolicy {
                dos: data.dos_weeks.clone(),
                proportions: SupplyProportions::fit(&data.shipments, from, to),
            },
            graphs: Mutex::new(BTreeMap::new()),
        }
    }

    /// Index structures for `copies` disjoint copies of the topology at `idx`.
    pub fn replica(&self, idx: usize, copies: usize) -> Result<Arc<GraphPair>, SimError> {
        let key = (self.data.weeks[idx].topology, copies);
        if let Some(g) = self.graphs.lock().expect("graph cache").get(&key) {
            return Ok(g.clone());
        }
        let g = Arc::new(GraphPair::new(&self.data.topology_at(idx).replicate(copies)?));
        self.graphs.lock().expect("graph cache").insert(key, g.clone());
        Ok(g)
    }

    /// Logged state at the start of week position `idx`.
    pub fn logged_state(&self, idx: usize) -> SimState {
        let w = &self.data.weeks[idx];
        SimState::new(w.week, w.inventory.clone(), self.data.shipments.pending_at(w.week).records().to_vec())
    }

    fn outlook<'b>(&self, demand: &'b [Vec<f64>], production: &'b [Vec<f64>]) -> Vec<&'b [f64]> {
        (0..self.data.node_count())
            .map(|v| match self.data.kinds[v] {
                NodeKind::Distribution => demand[v].as_slice(),
                NodeKind::Production => production[v].as_slice(),
            })
            .collect()
    }
}

/// Start positions in `split` whose `horizon` weeks of actuals exist.
pub fn start_indices(data: &SkuData, split: Split, horizon: usize) -> Vec<usize> {
    data.split_indices(split)
        .into_iter()
        .filter(|&i| i + horizon <= data.weeks.len())
        .collect()
}

/// Anything that maps a batch of states on disjoint copies of `topo` to
/// per-preference actions.
pub trait PolicyModel: Sync {
    fn pref_count(&self) -> usize;

    /// `(copies·|E|) × (|Λ|·M)` actions, row `c·|E| + e` for copy `c`.
    fn act(&self, topo: &Topology, rep: &GraphPair, states: &[NodeStateMatrix]) -> Result<Matrix<f64>, SimError>;
}

impl PolicyModel for Agent {
    fn pref_count(&self) -> usize {
        self.config.pref_count()
    }

    fn act(&self, _topo: &Topology, rep: &GraphPair, states: &[NodeStateMatrix]) -> Result<Matrix<f64>, SimError> {
        Ok(batched_policy(self, rep, states)?)
    }
}

/// Runs the policy on `states` (one graph copy each) in a single forward
/// pass; returns the `(copies·|E|) × (|Λ|·M)` action matrix.
pub fn batched_policy(agent: &Agent, rep: &GraphPair, states: &[NodeStateMatrix]) -> Result<Matrix<f64>, DiffError> {
    let mut tape = Tape::new();
    let p = agent.actor.bind(&mut tape, false);
    let mut xs = Vec::with_capacity(states.len());
    let mut caps = Vec::new();
    for x in states {
        xs.push(tape.constant(state_matrix(x)));
        caps.extend(capability_from_state(x));
    }
    let x = tape.vconcat(&xs);
    let cap = tape.constant(Matrix::column(caps));
    let out = agent.policy.forward(&mut tape, &p, x, rep, cap)?;
    Ok(tape.value(out.actions).clone())
}

fn block_slice(m: &Matrix<f64>, copy: usize, edges: usize, pref: usize, mots: usize) -> EdgeActions {
    let mut vals = Vec::with_capacity(edges * mots);
    for e in 0..edges {
        vals.extend_from_slice(&m.row(copy * edges + e)[pref * mots..(pref + 1) * mots]);
    }
    EdgeActions::from_values(edges, mots, vals).expect("shape")
}

fn check_horizon(data: &SkuData, idx: usize, need: usize) -> Result<(), SimError> {
    let w = &data.weeks[idx];
    let short = |v: &Vec<Vec<f64>>| v.iter().any(|f| f.len() < need);
    if short(&w.forecast) || short(&w.production_plan) {
        return Err(SimError::Horizon(format!(
            "week {} forecasts cover fewer than {need} steps",
            w.week
        )));
    }
    Ok(())
}

/// Executed action of the GPP policy: the first-interval action for `pref`
/// averaged over `Z` sampled outlooks.
pub fn gpp_first_action(
    ctx: &SkuContext,
    agent: &dyn PolicyModel,
    pref: usize,
    state: &SimState,
    idx: usize,
    settings: &SimSettings,
    rng: &mut ChaCha8Rng,
) -> Result<EdgeActions, SimError> {
    let data = ctx.data;
    let need = settings.k.saturating_sub(1);
    check_horizon(data, idx, need)?;
    let w = &data.weeks[idx];
    let z = settings.mc_draws.max(1);
    let mut states = Vec::with_capacity(z);
    for _ in 0..z {
        let (dem, prod) = sample_outlook(ctx, w, need, settings, rng);
        states.push(state.features(&data.kinds, settings.k, &ctx.outlook(&dem, &prod)));
    }
    let rep = ctx.replica(idx, z)?;
    let topo = data.topology_at(idx);
    let m = agent.act(topo, &rep, &states)?;
    let (e, mots) = (topo.edge_count(), topo.mot_count());
    let mut avg = EdgeActions::for_topology(topo);
    for c in 0..z {
        let s = block_slice(&m, c, e, pref, mots);
        for (a, b) in avg.values_mut().iter_mut().zip(s.values()) {
            *a += b;
        }
    }
    Ok(avg.scaled(1.0 / z as f64))
}

fn sample_outlook(
    ctx: &SkuContext,
    w: &crate::netmodel::WeekRecord,
    steps: usize,
    settings: &SimSettings,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = ctx.data.node_count();
    let mut dem = Vec::with_capacity(n);
    let mut prod = Vec::with_capacity(n);
    for v in 0..n {
        match ctx.data.kinds[v] {
            NodeKind::Distribution => {
                dem.push(settings.demand.sample(&w.forecast[v][..steps], rng));
                prod.push(vec![0.0; steps]);
            }
            NodeKind::Production => {
                dem.push(vec![0.0; steps]);
                prod.push(settings.production.sample(&w.production_plan[v][..steps], rng));
            }
        }
    }
    (dem, prod)
}

/// Policies that can drive an evaluation.
#[derive(Clone, Copy)]
pub enum PolicyKind<'a> {
    Gpp { agent: &'a dyn PolicyModel, pref: usize },
    Rule,
    /// Logged shipments with their logged lead times.
    Historical,
}

impl PolicyKind<'_> {
    pub fn label(&self) -> String {
        match self {
            PolicyKind::Gpp { pref, .. } => format!("gpp_{pref}"),
            PolicyKind::Rule => "rule".into(),
            PolicyKind::Historical => "historical".into(),
        }
    }
}

/// One executed interval of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub week: i64,
    pub inventory: Vec<f64>,
    pub capability: Vec<f64>,
    pub shipped: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub served: Vec<f64>,
    pub production: Vec<f64>,
    pub oos: Vec<f64>,
    pub es: Vec<f64>,
    pub inventory_next: Vec<f64>,
    pub in_transit_before: f64,
    pub in_transit_after: f64,
    /// Nodes whose proposed outgoing supply exceeded capability.
    pub reprojected: usize,
}

impl StepRecord {
    pub fn outcome(&self) -> StepOutcome {
        StepOutcome {
            arrivals: self.arrivals.clone(),
            served: self.served.clone(),
            oos: self.oos.clone(),
            es: self.es.clone(),
            shipped: self.shipped.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub sku: usize,
    pub start_week: i64,
    pub run: usize,
    pub steps: Vec<StepRecord>,
}

/// Receding-horizon rollout from logged week position `start` for `steps`
/// intervals against actual demand and production.
pub fn run_episode(
    ctx: &SkuContext,
    policy: PolicyKind,
    start: usize,
    steps: usize,
    run: usize,
    settings: &SimSettings,
) -> Result<Episode, SimError> {
    let data = ctx.data;
    if start + steps > data.weeks.len() {
        return Err(SimError::Horizon(format!(
            "episode from week {} needs {steps} weeks of actuals",
            data.weeks[start].week
        )));
    }
    let mut state = ctx.logged_state(start);
    let seed = derive_seed(settings.seed, &[ctx.index as u64, data.weeks[start].week as u64, run as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lead_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let idx = start + i;
        let w = &data.weeks[idx];
        let topo: &Topology = data.topology_at(idx);
        let capability = state.capability(&data.kinds, &w.demand, &w.production);
        let mut reprojected = 0;
        let shipments = match policy {
            PolicyKind::Historical => data
                .shipments
                .records()
                .iter()
                .filter(|s| s.send_time == w.week)
                .cloned()
                .collect(),
            PolicyKind::Rule | PolicyKind::Gpp { .. } => {
                let mut a = match policy {
                    PolicyKind::Gpp { agent, pref } => gpp_first_action(ctx, agent, pref, &state, idx, settings, &mut rng)?,
                    _ => {
                        let fc: Vec<&[f64]> = w.forecast.iter().map(Vec::as_slice).collect();
                        ctx.rule.step(topo, &state.inventory, &fc, &capability, &mut rng).actions
                    }
                };
                settings.constraints.apply(&mut a);
                reprojected = reproject(&mut a, topo, &capability);
                to_shipments(&a, topo, w.week, |e, k| {
                    let (s, d) = topo.edges()[e];
                    ctx.lead_times.sample(s, d, k, &mut lead_rng)
                })
            }
        };
        let inventory = state.inventory.clone();
        let before = state.in_transit();
        let o = state.advance(&data.kinds, &shipments, &w.demand, &w.production);
        out.push(StepRecord {
            week: w.week,
            inventory,
            capability,
            shipped: o.shipped,
            arrivals: o.arrivals,
            served: o.served,
            production: w.production.clone(),
            oos: o.oos,
            es: o.es,
            inventory_next: state.inventory.clone(),
            in_transit_before: before,
            in_transit_after: state.in_transit(),
            reprojected,
        });
    }
    Ok(Episode {
        sku: ctx.index,
        start_week: data.weeks[start].week,
        run,
        steps: out,
    })
}

/// Evaluates `policy` from every start in `starts` (`(sku, week position)`),
/// `settings.eval_runs` times each. Output order is fixed: start, then run.
pub fn evaluate(
    ctxs: &[SkuContext],
    starts: &[(usize, usize)],
    policy: PolicyKind,
    settings: &SimSettings,
) -> Result<Vec<Episode>, SimError> {
    let runs = match policy {
        PolicyKind::Historical => 1,
        _ => settings.eval_runs.max(1),
    };
    let jobs: Vec<(usize, usize, usize)> = starts
        .iter()
        .flat_map(|&(s, i)| (0..runs).map(move |r| (s, i, r)))
        .collect();
    jobs.par_iter()
        .map(|&(s, i, r)| run_episode(&ctxs[s], policy, i, settings.horizon, r, settings))
        .collect()
}

/// Every valid `(sku, position)` start in `split`.
pub fn split_starts(ctxs: &[SkuContext], split: Split, horizon: usize) -> Vec<(usize, usize)> {
    ctxs.iter()
        .enumerate()
        .flat_map(|(s, c)| start_indices(c.data, split, horizon).into_iter().map(move |i| (s, i)))
        .collect()
}

/// Per-step raw-unit costs of an episode.
pub fn episode_costs(ep: &Episode, data: &SkuData, obj: &CostObjective) -> Vec<f64> {
    ep.steps.iter().map(|s| step_cost(&s.outcome(), data, obj)).collect()
}

/// Algorithm output for one planning week.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub sku: String,
    pub week: i64,
    pub objectives: Vec<CostObjective>,
    /// `avg_cost[objective][λ]`: mean over draws of the horizon cost.
    pub avg_cost: Vec<Vec<f64>>,
    /// `actions[λ][j]`: per-interval actions averaged over draws.
    pub actions: Vec<Vec<EdgeActions>>,
    /// `λ*` per objective.
    pub selected: Vec<usize>,
    /// Largest capability excess seen in any retained trajectory.
    pub max_capacity_excess: f64,
}

/// Full Monte-Carlo plan from logged week position `idx`: every preference
/// is rolled out over `Z` sampled scenarios for `J` intervals, with common
/// random numbers across preferences.
pub fn plan(
    ctx: &SkuContext,
    agent: &dyn PolicyModel,
    idx: usize,
    settings: &SimSettings,
    objectives: &[CostObjective],
) -> Result<PlanResult, SimError> {
    let data = ctx.data;
    let (j_max, k) = (settings.horizon, settings.k);
    if j_max == 0 || settings.mc_draws == 0 {
        return Err(SimError::Horizon("J and Z must be positive".into()));
    }
    let need = j_max + k.saturating_sub(2);
    check_horizon(data, idx, need)?;
    let w = &data.weeks[idx];
    let topo = data.topology_at(idx);
    let z = settings.mc_draws;
    let n = data.node_count();
    let (e, mots) = (topo.edge_count(), topo.mot_count());
    let prefs = agent.pref_count();
    let base = derive_seed(settings.seed, &[ctx.index as u64, w.week as u64, 0x91a7]);

    // scenarios shared by every preference
    let mut scen_dem = Vec::with_capacity(z);
    let mut scen_prod = Vec::with_capacity(z);
    let mut scen_rng = Vec::with_capacity(z);
    for c in 0..z {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, &[c as u64]));
        let (d, p) = sample_outlook(ctx, w, need, settings, &mut rng);
        scen_dem.push(d);
        scen_prod.push(p);
        scen_rng.push(derive_seed(base, &[c as u64, 1]));
    }
    let rep = ctx.replica(idx, z)?;
    let mut avg_cost = vec![vec![0.0; prefs]; objectives.len()];
    let mut actions = Vec::with_capacity(prefs);
    let mut worst: f64 = 0.0;
    for l in 0..prefs {
        let mut states: Vec<SimState> = (0..z).map(|_| ctx.logged_state(idx)).collect();
        let mut lead_rngs: Vec<ChaCha8Rng> = scen_rng.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
        let mut per_j = Vec::with_capacity(j_max);
        for j in 0..j_max {
            let xs: Vec<NodeStateMatrix> = (0..z)
                .map(|c| {
                    let dem: Vec<Vec<f64>> = (0..n).map(|v| scen_dem[c][v][j..j + k - 1].to_vec()).collect();
                    let prod: Vec<Vec<f64>> = (0..n).map(|v| scen_prod[c][v][j..j + k - 1].to_vec()).collect();
                    states[c].features(&data.kinds, k, &ctx.outlook(&dem, &prod))
                })
                .collect();
            let m = agent.act(topo, &rep, &xs)?;
            let mut mean = EdgeActions::for_topology(topo);
            for c in 0..z {
                let mut a = block_slice(&m, c, e, l, mots);
                let dem: Vec<f64> = (0..n).map(|v| scen_dem[c][v][j]).collect();
                let prod: Vec<f64> = (0..n).map(|v| scen_prod[c][v][j]).collect();
                let cap = states[c].capability(&data.kinds, &dem, &prod);
                settings.constraints.apply(&mut a);
                for v in 0..n {
                    worst = worst.max(a.outgoing(topo, v) - cap[v]);
                }
                reproject(&mut a, topo, &cap);
                for (s, q) in mean.values_mut().iter_mut().zip(a.values()) {
                    *s += q;
                }
                let week = states[c].week;
                let lr = &mut lead_rngs[c];
                let ships = to_shipments(&a, topo, week, |ei, mk| {
                    let (s, d) = topo.edges()[ei];
                    ctx.lead_times.sample(s, d, mk, lr)
                });
                let o = states[c].advance(&data.kinds, &ships, &dem, &prod);
                for (oi, obj) in objectives.iter().enumerate() {
                    avg_cost[oi][l] += step_cost(&o, data, obj) / z as f64;
                }
            }
            per_j.push(mean.scaled(1.0 / z as f64));
        }
        actions.push(per_j);
    }
    let selected = avg_cost
        .iter()
        .map(|c| select_policy(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlanResult {
        sku: data.sku.clone(),
        week: w.week,
        objectives: objectives.to_vec(),
        avg_cost,
        actions,
        selected,
        max_capacity_excess: worst.max(0.0),
    })
}

/// Per-objective λ* and the validation loss from one evaluation per λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub objectives: Vec<CostObjective>,
    /// `avg_cost[objective][λ]`: mean over start weeks and runs of the
    /// horizon cost summed over SKUs.
    pub avg_cost: Vec<Vec<f64>>,
    pub selected: Vec<usize>,
    pub validation_loss: f64,
    pub start_weeks: Vec<i64>,
}

/// Groups episodes by `(start week, run)` and sums `f` over SKUs.
pub fn grouped<F: Fn(&Episode) -> Vec<f64>>(episodes: &[Episode], f: F) -> BTreeMap<(i64, usize), Vec<f64>> {
    let mut out: BTreeMap<(i64, usize), Vec<f64>> = BTreeMap::new();
    for ep in episodes {
        let v = f(ep);
        let slot = out.entry((ep.start_week, ep.run)).or_insert_with(|| vec![0.0; v.len()]);
        for (a, b) in slot.iter_mut().zip(&v) {
            *a += b;
        }
    }
    out
}

/// Simulates every preference on the validation starts and picks λ* per
/// objective by lowest average horizon cost.
pub fn validate(
    ctxs: &[SkuContext],
    agent: &dyn PolicyModel,
    starts: &[(usize, usize)],
    settings: &SimSettings,
    objectives: &[CostObjective],
) -> Result<ValidationReport, SimError> {
    let prefs = agent.pref_count();
    let mut avg_cost = vec![vec![0.0; prefs]; objectives.len()];
    // [objective][week][λ] 13th-step cost, averaged over runs
    let mut last_step: Vec<BTreeMap<i64, Vec<f64>>> = vec![BTreeMap::new(); objectives.len()];
    let mut weeks = Vec::new();
    for l in 0..prefs {
        let eps = evaluate(ctxs, starts, PolicyKind::Gpp { agent, pref: l }, settings)?;
        for (oi, obj) in objectives.iter().enumerate() {
            let g = grouped(&eps, |ep| episode_costs(ep, ctxs[ep.sku].data, obj));
            avg_cost[oi][l] = g.values().map(|c| c.iter().sum::<f64>()).sum::<f64>() / g.len().max(1) as f64;
            let mut per_week: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            for ((week, _), c) in &g {
                let s = per_week.entry(*week).or_default();
                s.0 += c.last().copied().unwrap_or(0.0);
                s.1 += 1;
            }
            for (week, (sum, cnt)) in per_week {
                last_step[oi].entry(week).or_insert_with(|| vec![0.0; prefs])[l] = sum / cnt as f64;
            }
        }
    }
    if let Some(m) = last_step.first() {
        weeks = m.keys().copied().collect();
    }
    let grid: Vec<Vec<Vec<f64>>> = last_step.into_iter().map(|m| m.into_values().collect()).collect();
    let selected = avg_cost
        .iter()
        .map(|c| select_policy(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ValidationReport {
        objectives: objectives.to_vec(),
        avg_cost,
        selected,
        validation_loss: validation_loss(&grid)?,
        start_weeks: weeks,
    })
}
