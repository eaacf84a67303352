use super::*;
use crate::actor_critic::{behavioral_regularizer, RiskPreference};
use crate::diff::{finite_diff_check_with_floor, Bound};
use crate::netmodel::{ActionTensor, NodeKind};
use rand::{Rng, SeedableRng};

fn pref(f_ref: f64) -> RiskPreference {
    RiskPreference::new(10.0, 10.0, f_ref).unwrap()
}

fn chain() -> Arc<Topology> {
    Arc::new(Topology::new(vec![NodeKind::Production, NodeKind::Distribution], vec![(0, 1)], 1).unwrap())
}

fn state(plant: f64, dc: f64) -> NodeStateMatrix {
    NodeStateMatrix::new(2, vec![plant, plant, dc, dc]).unwrap()
}

fn single(q: f64) -> EdgeActions {
    EdgeActions::from_values(1, 1, vec![q]).unwrap()
}

/// Plant ↔ DC chain: the DC starts at `f`, the logged policy ships the
/// deficit, and the DC then sits at `f_ref` with nothing more to ship.
fn chain_transitions(f_ref: f64, levels: &[f64]) -> Vec<Transition> {
    let topo = chain();
    let plant = f_ref + 0.05;
    levels
        .iter()
        .map(|&f| Transition {
            sku: 0,
            week: 0,
            topology: topo.clone(),
            x: state(plant, f),
            a: single((f_ref - f).max(0.0)),
            x_next: state(plant, f_ref),
            a_next: single(0.0),
        })
        .collect()
}

fn tiny_agent(prefs: Vec<RiskPreference>, seed: u64) -> Agent {
    Agent::new(ModelConfig::tiny(2, 1, prefs), seed)
}

fn random_samples(agent: &Agent, seed: u64, count: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = agent.config.mot_count;
    let k = agent.config.k;
    let mut ts = Vec::new();
    for _ in 0..count {
        let n = rng.random_range(3..=6);
        let mut edges = std::collections::BTreeSet::new();
        for _ in 0..2 * n {
            let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
            if s != d {
                edges.insert((s, d));
            }
        }
        let kinds = (0..n)
            .map(|v| if v == 0 { NodeKind::Production } else { NodeKind::Distribution })
            .collect();
        let topo = Arc::new(Topology::new(kinds, edges.into_iter().collect(), m).unwrap());
        let st = |rng: &mut ChaCha8Rng| {
            NodeStateMatrix::new(k, (0..n * k).map(|_| rng.random_range(-0.5..1.0)).collect()).unwrap()
        };
        let act = |rng: &mut ChaCha8Rng| {
            let e = topo.edge_count();
            EdgeActions::from_values(e, m, (0..e * m).map(|_| rng.random_range(0.0..0.4)).collect()).unwrap()
        };
        ts.push(Transition {
            sku: 0,
            week: 0,
            topology: topo.clone(),
            x: st(&mut rng),
            a: act(&mut rng),
            x_next: st(&mut rng),
            a_next: act(&mut rng),
        });
    }
    prepare_samples(&ts, &agent.config).unwrap()
}

#[test]
fn config_defaults_and_validation() {
    let c = TrainConfig::default();
    assert_eq!((c.gamma, c.tau, c.eta, c.batch_size, c.epochs), (0.95, 5e-5, 1.0, 4, 64));
    assert_eq!(c.learning_rate, 1e-3);
    assert_eq!(c.warmup_for(9), 30);
    assert!(c.validate().is_ok());
    for bad in [
        TrainConfig { gamma: 1.0, ..c.clone() },
        TrainConfig { tau: 0.0, ..c.clone() },
        TrainConfig { eta: -1.0, ..c.clone() },
        TrainConfig { batch_size: 0, ..c.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn td_target_is_reward_plus_discounted_target_value() {
    let agent = tiny_agent(vec![pref(0.3)], 1);
    let targets = Targets::new(&agent);
    let mut s = prepare_samples(&chain_transitions(0.3, &[0.1]), &agent.config).unwrap().remove(0);
    s.rewards = vec![0.5];
    let q = value_all_prefs(&agent.value, &agent.critic, &s.x_next, &s.a_next, &s.graph.single).unwrap()[0];
    let y = td_target(&agent, &targets, &s, 0.95, true).unwrap()[0];
    assert!((y - (0.5 + 0.95 * q)).abs() < 1e-12);
    assert_eq!(td_target(&agent, &targets, &s, 0.0, true).unwrap(), vec![0.5]);
    assert_eq!(td_target(&agent, &targets, &s, 0.0, false).unwrap(), vec![0.5]);
}

#[test]
fn warmup_and_actor_targets_agree_when_logged_action_is_the_policy_action() {
    let agent = tiny_agent(vec![pref(0.3)], 2);
    let targets = Targets::new(&agent);
    let mut s = prepare_samples(&chain_transitions(0.3, &[0.1]), &agent.config).unwrap().remove(0);
    s.capability_next = vec![0.7, 0.0];
    let mu = policy_actions(&agent.policy, &agent.actor, &s.x_next, &s.graph.single, &s.capability_next).unwrap();
    s.a_next = mu.slice(0).clone();
    let warm = td_target(&agent, &targets, &s, 0.95, true).unwrap();
    let cold = td_target(&agent, &targets, &s, 0.95, false).unwrap();
    assert!((warm[0] - cold[0]).abs() < 1e-12);
}

#[test]
fn critic_loss_at_the_target_is_zero_with_zero_gradient() {
    let agent = tiny_agent(vec![pref(0.3)], 3);
    let s = prepare_samples(&chain_transitions(0.3, &[0.1]), &agent.config).unwrap().remove(0);
    let q = value_all_prefs(&agent.value, &agent.critic, &s.x, &s.a, &s.graph.single).unwrap();
    let (l, g) = critic_loss_grad(&agent, &agent.critic, &s, &q).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    let y: Vec<f64> = q.iter().map(|v| v + 0.3).collect();
    let (l, _) = critic_loss_grad(&agent, &agent.critic, &s, &y).unwrap();
    assert!((l - 0.09).abs() < 1e-12);
}

#[test]
fn critic_loss_falls_on_a_fixed_batch() {
    let mut agent = tiny_agent(vec![pref(0.2), pref(0.4)], 4);
    let samples = random_samples(&agent, 5, 4);
    let targets = Targets::new(&agent);
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut opt = Adam::new(&agent.critic, 1e-2);
    let first = critic_step(&mut agent, &targets, &batch, 0.95, true, &mut opt).unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = critic_step(&mut agent, &targets, &batch, 0.95, true, &mut opt).unwrap();
    }
    assert!(last < first / 10.0, "{first} -> {last}");
}

fn zero_action_weights(agent: &mut Agent) {
    let ids: Vec<usize> = agent
        .critic
        .iter()
        .enumerate()
        .filter(|(_, (n, _))| n.ends_with(".w2"))
        .map(|(i, _)| i)
        .collect();
    assert!(!ids.is_empty());
    for i in ids {
        agent.critic.values_mut()[i].as_mut_slice().fill(0.0);
    }
}

#[test]
fn action_blind_critic_without_regularizer_gives_zero_actor_gradient() {
    let mut agent = tiny_agent(vec![pref(0.2), pref(0.4)], 6);
    zero_action_weights(&mut agent);
    let samples = random_samples(&agent, 7, 3);
    for s in &samples {
        let (_, g) = actor_objective_grad(&agent, &agent.actor, &agent.critic, s, ActorLoss::new(0.0)).unwrap();
        assert!(g.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn actor_objective_rises_against_a_frozen_critic() {
    let mut agent = tiny_agent(vec![pref(0.2), pref(0.4)], 8);
    let samples = random_samples(&agent, 9, 4);
    let batch: Vec<&Sample> = samples.iter().collect();
    let critic = agent.critic.clone();
    let mut opt = Adam::new(&agent.actor, 1e-2);
    let first = actor_step(&mut agent, &batch, ActorLoss::new(1.0), &mut opt).unwrap();
    let mut last = first;
    for _ in 0..50 {
        last = actor_step(&mut agent, &batch, ActorLoss::new(1.0), &mut opt).unwrap();
    }
    assert!(last > first, "{first} -> {last}");
    assert_eq!(agent.critic, critic);
}

#[test]
fn regularizer_drives_incoming_supply_to_the_shortfall() {
    let f_ref = 0.4;
    let mut agent = tiny_agent(vec![pref(f_ref)], 10);
    zero_action_weights(&mut agent);
    // DC last entry 0.1 below... shortfall of 0.25 units
    let t = Transition {
        x: NodeStateMatrix::new(2, vec![1.0, 1.0, 0.3, 0.15]).unwrap(),
        ..chain_transitions(f_ref, &[0.0]).remove(0)
    };
    let samples = prepare_samples(std::slice::from_ref(&t), &agent.config).unwrap();
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut opt = Adam::new(&agent.actor, 1e-2);
    for _ in 0..500 {
        actor_step(&mut agent, &batch, ActorLoss::new(1.0), &mut opt).unwrap();
    }
    let a = policy_actions(&agent.policy, &agent.actor, &t.x, &samples[0].graph.single, &samples[0].capability).unwrap();
    let residual = a.slice(0).incoming(&t.topology, 1) + (t.x.last(1) - f_ref).min(0.0);
    assert!(residual.abs() < 0.05, "residual {residual}");
    let reg = behavioral_regularizer(&t.x, a.slice(0), &t.topology, &pref(f_ref));
    assert!(reg > -0.05 * 0.05);
}

#[test]
fn full_warmup_leaves_the_actor_untouched() {
    let agent = tiny_agent(vec![pref(0.3)], 11);
    let samples = random_samples(&agent, 12, 6);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        warmup_iters: Some(6),
        tau: 0.01,
        ..Default::default()
    };
    let out = train(agent.clone(), &samples, &[], &cfg, None).unwrap();
    assert_eq!(out.history.iterations, 6);
    assert_eq!(out.last.actor, agent.actor);
    assert_ne!(out.last.critic, agent.critic);
    assert!(out.history.actor_objective.iter().all(Option::is_none));
}

#[test]
fn training_is_seed_deterministic_and_writes_checkpoints() {
    let agent = tiny_agent(vec![pref(0.2), pref(0.4)], 13);
    let samples = random_samples(&agent, 14, 6);
    let val = random_samples(&agent, 15, 2);
    let cfg = TrainConfig {
        epochs: 3,
        warmup_iters: Some(2),
        tau: 0.01,
        seed: 3,
        ..Default::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = train(agent.clone(), &samples, &val, &cfg, Some(d1.path())).unwrap();
    let b = train(agent, &samples, &val, &cfg, Some(d2.path())).unwrap();
    assert_eq!(a.last.to_bytes(), b.last.to_bytes());
    for name in ["epoch_001.ckpt", "epoch_003.ckpt", "model.ckpt", "metadata.json"] {
        let x = std::fs::read(d1.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(d2.path().join(name)).unwrap(), "{name}");
    }
    let meta: TrainMetadata =
        serde_json::from_str(&std::fs::read_to_string(d1.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta.history.train_td_loss.len(), 3);
    assert_eq!(meta.checkpoints.len(), 3);
    let loaded = Agent::load(&d1.path().join("epoch_003.ckpt")).unwrap();
    assert_eq!(loaded, a.last);
}

#[test]
fn keep_last_writes_the_final_epoch_as_the_model() {
    let agent = tiny_agent(vec![pref(0.2), pref(0.4)], 13);
    let samples = random_samples(&agent, 14, 6);
    let val = random_samples(&agent, 15, 2);
    let cfg = TrainConfig {
        epochs: 3,
        warmup_iters: Some(2),
        tau: 0.01,
        keep: Keep::Last,
        ..Default::default()
    };
    let d = tempfile::tempdir().unwrap();
    let out = train(agent, &samples, &val, &cfg, Some(d.path())).unwrap();
    assert_eq!(out.agent, out.last);
    assert_eq!(Agent::load(&d.path().join("model.ckpt")).unwrap(), out.last);
    let meta: TrainMetadata =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta.selected_checkpoint, "epoch_003.ckpt");
}

#[test]
fn agent_bytes_round_trip_and_reject_garbage() {
    let agent = tiny_agent(vec![pref(0.2)], 16);
    let bytes = agent.to_bytes();
    assert_eq!(Agent::from_bytes(&bytes).unwrap(), agent);
    assert!(Agent::from_bytes(&bytes[..20]).is_err());
    assert!(Agent::from_bytes(b"not a checkpoint").is_err());
}

#[test]
fn empty_dataset_is_rejected() {
    let agent = tiny_agent(vec![pref(0.2)], 17);
    assert!(matches!(
        train(agent, &[], &[], &TrainConfig::default(), None),
        Err(TrainError::EmptyDataset)
    ));
}

/// Chain corpus with exploratory actions: the DC at level `f` receives `a`
/// and moves to `f + a`; the logged policy then ships the deficit
/// `max(f_ref − f', 0)`. The plant stays at `plant`.
fn exploratory_chain(r: &RiskPreference, plant: f64) -> Vec<Transition> {
    let topo = chain();
    let deficit = |f: f64| (r.f_ref - f).max(0.0);
    let mut out = Vec::new();
    for i in 0..=14 {
        let f = i as f64 * 0.05 - 0.1;
        let mut acts = vec![0.0, 0.1, 0.2, 0.3, deficit(f)];
        acts.sort_by(f64::total_cmp);
        acts.dedup();
        for a in acts.into_iter().filter(|a| f + a <= 0.6 + 1e-9) {
            let f1 = f + a;
            out.push(Transition {
                sku: 0,
                week: 0,
                topology: topo.clone(),
                x: state(plant, f),
                a: single(a),
                x_next: state(plant, f1),
                a_next: single(deficit(f1)),
            });
        }
    }
    out
}

/// `Q(f, a)` of the deficit policy after one arbitrary action.
fn chain_q(r: &RiskPreference, plant: f64, gamma: f64, f: f64, a: f64) -> f64 {
    let rp = crate::actor_critic::node_reward(plant, r);
    let y = |f: f64| crate::actor_critic::node_reward(f, r);
    let f1 = f + a;
    let v = if f1 <= r.f_ref {
        (rp + 1.0) / (1.0 - gamma)
    } else {
        (rp + y(f1)) / (1.0 - gamma)
    };
    rp + y(f1) + gamma * v
}

#[test]
fn chain_oracle_critic_and_actor() {
    let r = RiskPreference::new(2.0, 10.0, 0.3).unwrap();
    let (plant, gamma) = (0.6, 0.95);
    let agent = tiny_agent(vec![r], 18);
    let ts = exploratory_chain(&r, plant);
    let samples = prepare_samples(&ts, &agent.config).unwrap();
    let cfg = TrainConfig {
        epochs: 800,
        warmup_iters: Some(usize::MAX),
        tau: 0.5,
        learning_rate: 3e-3,
        patience: None,
        ..Default::default()
    };
    let critic_only = train(agent, &samples, &[], &cfg, None).unwrap().last;
    let mut worst: f64 = 0.0;
    for (t, s) in ts.iter().zip(&samples) {
        let (f, a) = (t.x.last(1), t.a.get(0, 0));
        let q = value_all_prefs(&critic_only.value, &critic_only.critic, &s.x, &s.a, &s.graph.single).unwrap()[0];
        let want = chain_q(&r, plant, gamma, f, a);
        if (a - (r.f_ref - f).max(0.0)).abs() < 1e-12 {
            worst = worst.max(((q - want) / want).abs());
        }
    }
    assert!(worst < 0.05, "worst relative error {worst}");

    let cfg = TrainConfig {
        epochs: 200,
        warmup_iters: Some(0),
        ..cfg
    };
    let ag = train(critic_only, &samples, &[], &cfg, None).unwrap().last;
    let mut worst: f64 = 0.0;
    for s in &samples {
        let a = policy_actions(&ag.policy, &ag.actor, &s.x, &s.graph.single, &s.capability).unwrap();
        worst = worst.max((a.slice(0).get(0, 0) - (r.f_ref - s.x.last(1)).max(0.0)).abs());
    }
    assert!(worst < 0.05, "worst action error {worst}");
    for q in &value_diag_bounds(&ag, &samples) {
        assert!(q.abs() <= 2.0 / (1.0 - gamma));
    }
}

fn value_diag_bounds(ag: &Agent, samples: &[Sample]) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|s| {
            let a = ActionTensor::broadcast(&s.a, 1);
            value_diag(&ag.value, &ag.critic, &s.x, &a, &s.graph).unwrap()
        })
        .collect()
}

#[test]
fn td_and_policy_losses_pass_gradient_checks() {
    let agent = tiny_agent(vec![pref(0.1), pref(0.4)], 19);
    let targets = Targets::new(&agent);
    for s in random_samples(&agent, 20, 3) {
        let y = td_target(&agent, &targets, &s, 0.95, false).unwrap();
        let td = finite_diff_check_with_floor(
            |tape: &mut Tape<f64>, p: &Bound| {
                let x = tape.constant(state_matrix(&s.x));
                let a = tape.constant(action_matrix(&s.a));
                let q = agent.value.network_values(tape, p, x, a, &s.graph.single)?;
                let yv = tape.constant(Matrix::from_vec(1, y.len(), y.clone()));
                let d = tape.sub(q, yv);
                let sq = tape.square(d);
                Ok(tape.mean(sq))
            },
            &agent.critic,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(td.max_rel_error < 1e-5, "{td:?}");
        let pol = finite_diff_check_with_floor(
            |tape: &mut Tape<f64>, p: &Bound| {
                let q = agent.critic.bind(tape, false);
                let x = tape.constant(state_matrix(&s.x));
                let cap = tape.constant(Matrix::column(s.capability.clone()));
                let out = agent.policy.forward(tape, p, x, &s.graph.single, cap)?;
                let qv = agent.value.q_diag(tape, &q, x, out.actions, 1, &s.graph.rep)?;
                let qv = tape.scale(qv, 0.05);
                Ok(tape.mean(qv))
            },
            &agent.actor,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(pol.max_rel_error < 1e-5, "{pol:?}");
    }
}
