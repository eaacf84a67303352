//! Offline actor-critic training on logged transitions.
//!
//! The first `N` iterations fit the critic alone against logged next actions.
//! Afterwards every minibatch takes one critic step and one actor step, and
//! both target copies move by a soft update after every iteration.

mod agent;

pub use agent::{Agent, AgentError};

use crate::actor_critic::{
    action_matrix, capability_from_state, policy_actions, scoped_reward, regularizer_on_tape, state_matrix,
    value_all_prefs, value_diag, ModelConfig, PreparedGraph,
};
use crate::diff::{Adam, DiffError, Matrix, ParamStore, TargetParams, Tape};
use crate::netmodel::{EdgeActions, NodeStateMatrix, Topology, Transition};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training transitions")]
    EmptyDataset,
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Critic-only iterations; `None` means ten epochs' worth.
    pub warmup_iters: Option<usize>,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub min_delta: f64,
    /// Scale of the Q term in the actor objective.
    pub q_scale: QScale,
    /// Which agent `train` returns and writes as `model.ckpt`.
    pub keep: Keep,
}

/// Checkpoint returned by training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    /// Post-warmup epoch with the lowest validation TD loss.
    #[default]
    BestValidation,
    /// Final epoch. The TD loss tracks the critic, not the policy, so the
    /// best-loss epoch can leave the actor barely trained.
    Last,
}

/// How the actor objective weighs `Q^λ` against the regularizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QScale {
    /// `Q^λ` as the critic returns it, summed over nodes.
    #[default]
    Network,
    /// `Q^λ (1 − γ) / |V|`: mean per-node, per-period value, the same
    /// footing as the node-averaged regularizer.
    PerNodeStep,
}

/// Actor objective settings: regularizer weight and Q scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorLoss {
    pub eta: f64,
    pub q_scale: QScale,
}

impl ActorLoss {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            q_scale: QScale::Network,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 5e-5,
            eta: 1.0,
            batch_size: 4,
            epochs: 64,
            learning_rate: 1e-3,
            warmup_iters: None,
            seed: 0,
            patience: Some(5),
            min_delta: 1e-4,
            q_scale: QScale::Network,
            keep: Keep::BestValidation,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn iterations_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }

    pub fn warmup_for(&self, samples: usize) -> usize {
        self.warmup_iters
            .unwrap_or(10 * self.iterations_per_epoch(samples))
    }
}

/// A transition with everything the losses need precomputed.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: NodeStateMatrix,
    pub a: EdgeActions,
    pub x_next: NodeStateMatrix,
    pub a_next: EdgeActions,
    pub graph: Arc<PreparedGraph>,
    pub capability: Vec<f64>,
    pub capability_next: Vec<f64>,
    /// `r(x, a)` per preference, from the successor state.
    pub rewards: Vec<f64>,
}

/// Builds samples, sharing graph indices between transitions on the same
/// topology.
pub fn prepare_samples(transitions: &[Transition], cfg: &ModelConfig) -> Result<Vec<Sample>, TrainError> {
    let mut cache: BTreeMap<*const Topology, Arc<PreparedGraph>> = BTreeMap::new();
    let mut out = Vec::with_capacity(transitions.len());
    for t in transitions {
        if t.x.k() != cfg.k || t.x_next.k() != cfg.k {
            return Err(TrainError::Config(format!(
                "transition has {} features per node, model expects {}",
                t.x.k(),
                cfg.k
            )));
        }
        let key = Arc::as_ptr(&t.topology);
        let graph = match cache.get(&key) {
            Some(g) => g.clone(),
            None => {
                let g = Arc::new(PreparedGraph::new(&t.topology, cfg.pref_count())?);
                cache.insert(key, g.clone());
                g
            }
        };
        out.push(Sample {
            capability: capability_from_state(&t.x),
            capability_next: capability_from_state(&t.x_next),
            rewards: cfg
                .prefs
                .iter()
                .map(|r| scoped_reward(&t.x_next, &t.topology, r, cfg.reward_scope))
                .collect(),
            x: t.x.clone(),
            a: t.a.clone(),
            x_next: t.x_next.clone(),
            a_next: t.a_next.clone(),
            graph,
        });
    }
    Ok(out)
}

/// Frozen target copies of both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub actor: TargetParams<f64>,
    pub critic: TargetParams<f64>,
}

impl Targets {
    pub fn new(agent: &Agent) -> Self {
        Self {
            actor: TargetParams::new(&agent.actor),
            critic: TargetParams::new(&agent.critic),
        }
    }
}

/// `y = r + γ·Q_target(x', a')` per preference, with `a'` the logged next
/// action during warmup and the target actor's action otherwise.
pub fn td_target(agent: &Agent, targets: &Targets, s: &Sample, gamma: f64, warmup: bool) -> Result<Vec<f64>, DiffError> {
    let q_next = if warmup {
        value_all_prefs(&agent.value, targets.critic.params(), &s.x_next, &s.a_next, &s.graph.single)?
    } else {
        let a = policy_actions(
            &agent.policy,
            targets.actor.params(),
            &s.x_next,
            &s.graph.single,
            &s.capability_next,
        )?;
        value_diag(&agent.value, targets.critic.params(), &s.x_next, &a, &s.graph)?
    };
    Ok(s.rewards.iter().zip(&q_next).map(|(r, q)| r + gamma * q).collect())
}

/// Per-sample TD loss `|Λ|⁻¹‖y − Q(x, a)‖²` and its gradient.
pub fn critic_loss_grad(
    agent: &Agent,
    critic: &ParamStore<f64>,
    s: &Sample,
    y: &[f64],
) -> Result<(f64, Vec<Matrix<f64>>), DiffError> {
    let mut tape = Tape::new();
    let p = critic.bind(&mut tape, true);
    let x = tape.constant(state_matrix(&s.x));
    let a = tape.constant(action_matrix(&s.a));
    let q = agent.value.network_values(&mut tape, &p, x, a, &s.graph.single)?;
    let yv = tape.constant(Matrix::from_vec(1, y.len(), y.to_vec()));
    let d = tape.sub(q, yv);
    let sq = tape.square(d);
    let loss = tape.mean(sq);
    let g = tape.backward(loss)?;
    Ok((tape.scalar_value(loss), p.gradients(&g, critic)))
}

/// Per-sample actor objective `|Λ|⁻¹ Σ_λ (w·Q^λ + η·L^λ)` and its gradient,
/// with `w` set by [`QScale`].
pub fn actor_objective_grad(
    agent: &Agent,
    actor: &ParamStore<f64>,
    critic: &ParamStore<f64>,
    s: &Sample,
    loss: ActorLoss,
) -> Result<(f64, Vec<Matrix<f64>>), DiffError> {
    let mut tape = Tape::new();
    let p = actor.bind(&mut tape, true);
    let q = critic.bind(&mut tape, false);
    let x = tape.constant(state_matrix(&s.x));
    let cap = tape.constant(Matrix::column(s.capability.clone()));
    let out = agent.policy.forward(&mut tape, &p, x, &s.graph.single, cap)?;
    let qv = agent
        .value
        .q_diag(&mut tape, &q, x, out.actions, agent.policy.mots, &s.graph.rep)?;
    let mut total = tape.mean(qv);
    if loss.q_scale == QScale::PerNodeStep {
        total = tape.scale(total, (1.0 - agent.config.gamma) / s.x.node_count() as f64);
    }
    let eta = loss.eta;
    if eta != 0.0 {
        let regs: Vec<_> = (0..agent.policy.prefs)
            .map(|l| {
                let a = agent.policy.slice(&mut tape, out.actions, l);
                regularizer_on_tape(&mut tape, a, &s.x, &s.graph.single.fwd, agent.config.prefs[l].f_ref)
            })
            .collect();
        let r = tape.hconcat(&regs);
        let r = tape.mean(r);
        let r = tape.scale(r, eta);
        total = tape.add(total, r);
    }
    let g = tape.backward(total)?;
    Ok((tape.scalar_value(total), p.gradients(&g, actor)))
}

fn mean_grads(parts: Vec<(f64, Vec<Matrix<f64>>)>, negate: bool) -> (f64, Vec<Matrix<f64>>) {
    let count = parts.len() as f64;
    let mut iter = parts.into_iter();
    let (mut loss, mut acc) = iter.next().expect("nonempty batch");
    for (l, g) in iter {
        loss += l;
        for (a, b) in acc.iter_mut().zip(&g) {
            a.add_assign(b);
        }
    }
    let k = if negate { -1.0 / count } else { 1.0 / count };
    for m in &mut acc {
        m.as_mut_slice().iter_mut().for_each(|v| *v *= k);
    }
    (loss / count, acc)
}

/// One Adam step on the critic; returns the batch TD loss before the step.
pub fn critic_step(
    agent: &mut Agent,
    targets: &Targets,
    batch: &[&Sample],
    gamma: f64,
    warmup: bool,
    opt: &mut Adam<f64>,
) -> Result<f64, DiffError> {
    let a: &Agent = agent;
    let parts = batch
        .par_iter()
        .map(|s| {
            let y = td_target(a, targets, s, gamma, warmup)?;
            critic_loss_grad(a, &a.critic, s, &y)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (loss, grads) = mean_grads(parts, false);
    if !loss.is_finite() {
        return Err(DiffError::NonFinite { primitive: "td loss" });
    }
    opt.step(&mut agent.critic, &grads)?;
    Ok(loss)
}

/// One ascent step on the actor with the critic frozen; returns the batch
/// objective before the step.
pub fn actor_step(agent: &mut Agent, batch: &[&Sample], loss: ActorLoss, opt: &mut Adam<f64>) -> Result<f64, DiffError> {
    let a: &Agent = agent;
    let parts = batch
        .par_iter()
        .map(|s| actor_objective_grad(a, &a.actor, &a.critic, s, loss))
        .collect::<Result<Vec<_>, _>>()?;
    let (obj, grads) = mean_grads(parts, true);
    if !obj.is_finite() {
        return Err(DiffError::NonFinite { primitive: "actor objective" });
    }
    opt.step(&mut agent.actor, &grads)?;
    Ok(obj)
}

/// Mean TD loss on held-out samples under the current targets.
pub fn evaluation_loss(agent: &Agent, targets: &Targets, samples: &[Sample], gamma: f64, warmup: bool) -> Result<f64, DiffError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = samples
        .par_iter()
        .map(|s| {
            let y = td_target(agent, targets, s, gamma, warmup)?;
            let q = value_all_prefs(&agent.value, &agent.critic, &s.x, &s.a, &s.graph.single)?;
            Ok(q.iter().zip(&y).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / y.len() as f64)
        })
        .collect::<Result<Vec<f64>, DiffError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Per-epoch loss series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_td_loss: Vec<f64>,
    /// `None` for epochs made only of warmup iterations.
    pub actor_objective: Vec<Option<f64>>,
    /// `None` when no validation samples were given.
    pub validation_td_loss: Vec<Option<f64>>,
    pub warmup_iters: usize,
    pub iterations: usize,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Contents of `metadata.json` in the checkpoint directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub checkpoints: Vec<String>,
    pub selected_checkpoint: String,
    pub history: TrainHistory,
}

pub struct TrainOutcome {
    /// The checkpoint chosen by `TrainConfig::keep`; the last one when no
    /// validation data or no post-warmup epoch exists.
    pub agent: Agent,
    pub last: Agent,
    pub history: TrainHistory,
}

/// Runs the full loop. With `out_dir`, writes `epoch_NNN.ckpt` after every
/// epoch, `model.ckpt` for the selected agent, and `metadata.json`.
pub fn train(
    init: Agent,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut agent = init;
    let mut targets = Targets::new(&agent);
    let mut critic_opt = Adam::new(&agent.critic, cfg.learning_rate);
    let mut actor_opt = Adam::new(&agent.actor, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let warmup = cfg.warmup_for(train_samples.len());
    let mut history = TrainHistory {
        warmup_iters: warmup,
        ..Default::default()
    };
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, usize, Agent)> = None;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut t = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut td_sum, mut actor_sum, mut actor_n, mut iters) = (0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_samples[i]).collect();
            let warm = t < warmup;
            let td = critic_step(&mut agent, &targets, &batch, cfg.gamma, warm, &mut critic_opt)
                .map_err(|e| non_finite(e, "td loss", t))?;
            td_sum += td;
            if !warm {
                let j = actor_step(&mut agent, &batch, ActorLoss { eta: cfg.eta, q_scale: cfg.q_scale }, &mut actor_opt)
                    .map_err(|e| non_finite(e, "actor objective", t))?;
                actor_sum += j;
                actor_n += 1;
            }
            targets.critic.soft_update(&agent.critic, cfg.tau)?;
            targets.actor.soft_update(&agent.actor, cfg.tau)?;
            t += 1;
            iters += 1;
        }
        history.train_td_loss.push(td_sum / iters as f64);
        history
            .actor_objective
            .push((actor_n > 0).then(|| actor_sum / actor_n as f64));
        let post_warmup = t > warmup;
        let val = if val_samples.is_empty() {
            None
        } else {
            Some(evaluation_loss(&agent, &targets, val_samples, cfg.gamma, !post_warmup)?)
        };
        history.validation_td_loss.push(val);

        if let Some(d) = out_dir {
            let name = format!("epoch_{:03}.ckpt", epoch + 1);
            std::fs::write(d.join(&name), agent.to_bytes())?;
            checkpoints.push(name);
        }

        if let (Some(v), true) = (val, post_warmup) {
            let improved = best.as_ref().is_none_or(|(b, _, _)| v < b - cfg.min_delta);
            if improved {
                best = Some((v, epoch, agent.clone()));
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience.is_some_and(|p| stale >= p) {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }
    history.iterations = t;
    history.best_epoch = best.as_ref().map(|(_, e, _)| *e);
    let best_epoch = match cfg.keep {
        Keep::BestValidation => history.best_epoch,
        Keep::Last => None,
    };
    let selected = match cfg.keep {
        Keep::BestValidation => best.map(|(_, _, a)| a),
        Keep::Last => None,
    }
    .unwrap_or_else(|| agent.clone());

    if let Some(d) = out_dir {
        std::fs::write(d.join("model.ckpt"), selected.to_bytes())?;
        let meta = TrainMetadata {
            train_config: cfg.clone(),
            model_config: agent.config.clone(),
            train_samples: train_samples.len(),
            validation_samples: val_samples.len(),
            selected_checkpoint: best_epoch.map_or_else(|| checkpoints.last().cloned().unwrap_or_default(), |e| format!("epoch_{:03}.ckpt", e + 1)),
            checkpoints,
            history: history.clone(),
        };
        std::fs::write(
            d.join("metadata.json"),
            serde_json::to_string_pretty(&meta).expect("metadata serializes"),
        )?;
    }
    Ok(TrainOutcome {
        agent: selected,
        last: agent,
        history,
    })
}

fn non_finite(e: DiffError, what: &'static str, iteration: usize) -> TrainError {
    match e {
        DiffError::NonFinite { .. } => TrainError::NonFinite { what, iteration },
        other => TrainError::Diff(other),
    }
}

#[cfg(test)]
mod tests;
