use super::*;
use crate::diff::{finite_diff_check_with_floor, Bound, ParamStore};
use crate::gat::GraphPair;
use crate::netmodel::{ActionTensor, Topology};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dc_topology(n: usize, edges: &[(usize, usize)], m: usize) -> Topology {
    Topology::new(vec![NodeKind::Distribution; n], edges.to_vec(), m).unwrap()
}

fn random_topology(rng: &mut ChaCha8Rng, n: usize, tries: usize, m: usize) -> Topology {
    let mut set = std::collections::BTreeSet::new();
    for _ in 0..tries {
        let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
        if s != d {
            set.insert((s, d));
        }
    }
    dc_topology(n, &set.into_iter().collect::<Vec<_>>(), m)
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, k: usize) -> NodeStateMatrix {
    NodeStateMatrix::new(k, (0..n * k).map(|_| rng.random_range(-0.5..1.0)).collect()).unwrap()
}

fn normalize(fracs: Vec<f64>, edges: &[(usize, usize)], n: usize, cap: Vec<f64>, m: usize) -> Vec<f64> {
    let t = dc_topology(n, edges, m);
    let g = GraphIndex::new(&t);
    let mut tape = Tape::<f64>::new();
    let f = tape.constant(Matrix::from_vec(edges.len(), m, fracs));
    let c = tape.constant(Matrix::column(cap));
    let a = scale_to_capability(&mut tape, f, &g, c, 1);
    tape.value(a).as_slice().to_vec()
}

#[test]
fn under_unit_total_ships_capability_times_fraction() {
    let a = normalize(vec![0.3, 0.4], &[(0, 1), (0, 2)], 3, vec![10.0, 0.0, 0.0], 1);
    assert!((a[0] - 3.0).abs() < 1e-12 && (a[1] - 4.0).abs() < 1e-12);
}

#[test]
fn over_unit_total_is_renormalized() {
    let a = normalize(vec![0.8, 0.6], &[(0, 1), (0, 2)], 3, vec![10.0, 0.0, 0.0], 1);
    assert!((a[0] - 10.0 * 0.8 / 1.4).abs() < 1e-12);
    assert!((a[1] - 10.0 * 0.6 / 1.4).abs() < 1e-12);
    assert!((a[0] + a[1] - 10.0).abs() < 1e-12);
}

#[test]
fn exact_unit_total_takes_the_plain_branch() {
    let a = normalize(vec![0.5, 0.5], &[(0, 1), (0, 2)], 3, vec![4.0, 0.0, 0.0], 1);
    assert_eq!(a, vec![2.0, 2.0]);
}

#[test]
fn node_without_out_edges_ships_nothing() {
    let a = normalize(vec![0.9], &[(1, 0)], 3, vec![5.0, 2.0, 7.0], 1);
    assert!((a[0] - 2.0 * 0.9).abs() < 1e-12);
    assert_eq!(a.len(), 1);
}

#[test]
fn capability_is_clamped() {
    assert_eq!(supply_capability(NodeKind::Distribution, 3.0, 1.0, 10.0), 0.0);
    assert_eq!(supply_capability(NodeKind::Distribution, 3.0, 1.0, 2.0), 2.0);
    assert_eq!(supply_capability(NodeKind::Production, 3.0, 1.0, 99.0), 4.0);
}

fn build(cfg: &ModelConfig, seed: u64) -> (ParamStore<f64>, PolicyNet, ParamStore<f64>, ValueNet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::new();
    let policy = PolicyNet::new(&mut ps, cfg, &mut rng);
    let mut qs = ParamStore::new();
    let value = ValueNet::new(&mut qs, cfg, &mut rng);
    (ps, policy, qs, value)
}

fn prefs(n: usize) -> Vec<RiskPreference> {
    RiskPreference::default_grid().into_iter().take(n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn policy_respects_capability(seed in 0u64..1000, n in 2usize..8) {
        let cfg = ModelConfig::tiny(3, 2, prefs(3));
        let (ps, policy, _, _) = build(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let t = random_topology(&mut rng, n, 3 * n, 2);
        let x = random_state(&mut rng, n, 3);
        let cap: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let a = policy_actions(&policy, &ps, &x, &GraphPair::new(&t), &cap).unwrap();
        for s in a.slices() {
            for v in 0..n {
                prop_assert!(s.outgoing(&t, v) <= cap[v] + 1e-9);
            }
            prop_assert!(s.values().iter().all(|&q| q >= 0.0));
        }
    }
}

#[test]
fn value_is_bounded_by_node_count() {
    let cfg = ModelConfig::tiny(3, 2, prefs(2));
    let (_, _, mut qs, value) = build(&cfg, 3);
    // push the output layer to saturation
    let (w, b) = *value.mlp.layers.last().unwrap();
    qs.get_mut(w).as_mut_slice().iter_mut().for_each(|x| *x *= 100.0);
    qs.get_mut(b).as_mut_slice().iter_mut().for_each(|x| *x = 50.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [1usize, 9] {
        let t = random_topology(&mut rng, n, 2 * n, 2);
        let x = random_state(&mut rng, n, 3);
        let a = ActionTensor::broadcast(&EdgeActions::for_topology(&t), 2);
        let q = value_per_pref(&value, &qs, &x, &a, &GraphPair::new(&t)).unwrap();
        let bound = n as f64 / (1.0 - 0.95);
        for v in q {
            assert!(v.abs() <= bound + 1e-9, "{v} vs {bound}");
            assert!(v.abs() > 0.9 * bound);
        }
    }
}

#[test]
fn disconnected_duplicate_doubles_network_value() {
    let cfg = ModelConfig::tiny(3, 2, prefs(2));
    let (_, _, qs, value) = build(&cfg, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = random_topology(&mut rng, 4, 8, 2);
    let x = random_state(&mut rng, 4, 3);
    let vals: Vec<f64> = (0..t.edge_count() * 2).map(|_| rng.random_range(0.0..1.0)).collect();
    let a = EdgeActions::from_values(t.edge_count(), 2, vals.clone()).unwrap();
    let q1 = value_per_pref(&value, &qs, &x, &ActionTensor::broadcast(&a, 2), &GraphPair::new(&t)).unwrap();
    let tt = t.disjoint_union(&t).unwrap();
    let xx = x.stack(&x).unwrap();
    let aa = EdgeActions::from_values(tt.edge_count(), 2, [vals.clone(), vals].concat()).unwrap();
    let q2 = value_per_pref(&value, &qs, &xx, &ActionTensor::broadcast(&aa, 2), &GraphPair::new(&tt)).unwrap();
    for (a, b) in q1.iter().zip(&q2) {
        assert!((2.0 * a - b).abs() < 1e-10);
    }
}

#[test]
fn regularizer_on_tape_matches_plain_version() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = random_topology(&mut rng, 5, 10, 2);
    let x = random_state(&mut rng, 5, 4);
    let vals: Vec<f64> = (0..t.edge_count() * 2).map(|_| rng.random_range(0.0..0.3)).collect();
    let a = EdgeActions::from_values(t.edge_count(), 2, vals).unwrap();
    let r = RiskPreference::new(10.0, 10.0, 0.3).unwrap();
    let mut tape = Tape::<f64>::new();
    let av = tape.constant(action_matrix(&a));
    let l = regularizer_on_tape(&mut tape, av, &x, &GraphIndex::new(&t), r.f_ref);
    assert!((tape.scalar_value(l) - behavioral_regularizer(&x, &a, &t, &r)).abs() < 1e-12);
}

#[test]
fn actor_through_critic_gradients_match_finite_differences() {
    let cfg = ModelConfig::tiny(3, 2, prefs(2));
    for seed in 0..3u64 {
        let (ps, policy, qs, value) = build(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        let t = random_topology(&mut rng, 3, 6, 2);
        let x = random_state(&mut rng, 3, 3);
        let cap: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.5)).collect();
        let g = GraphPair::new(&t);
        let report = finite_diff_check_with_floor(
            |tape: &mut Tape<f64>, p: &Bound| {
                let q = qs.bind(tape, false);
                let xv = tape.constant(state_matrix(&x));
                let c = tape.constant(Matrix::column(cap.clone()));
                let out = policy.forward(tape, p, xv, &g, c)?;
                let mut terms = Vec::new();
                for l in 0..2 {
                    let a = policy.slice(tape, out.actions, l);
                    let qv = value.q_pref(tape, &q, xv, a, &g, l)?;
                    // unit-scale Q keeps finite-difference roundoff small
                    let qv = tape.scale(qv, 1.0 / cfg.value_scale());
                    let reg = regularizer_on_tape(tape, a, &x, &g.fwd, cfg.prefs[l].f_ref);
                    terms.push(tape.add(qv, reg));
                }
                let all = tape.hconcat(&terms);
                Ok(tape.mean(all))
            },
            &ps,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}

#[test]
fn shipping_constraints_cap_and_quantize() {
    let mut a = EdgeActions::from_values(2, 2, vec![0.95, 0.3, 0.04, 2.0]).unwrap();
    ShippingConstraints {
        mot_capacity: Some(vec![0.5, 1.0]),
        moq: Some(0.1),
    }
    .apply(&mut a);
    let want = [0.5, 0.3, 0.0, 1.0];
    for (x, w) in a.values().iter().zip(want) {
        assert!((x - w).abs() < 1e-12, "{:?}", a.values());
    }
    assert!(!ShippingConstraints::default().is_active());
}

#[test]
fn single_precision_network_runs() {
    let cfg = ModelConfig::tiny(3, 1, prefs(1));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ps = ParamStore::<f32>::new();
    let policy = PolicyNet::new(&mut ps, &cfg, &mut rng);
    let t = dc_topology(2, &[(0, 1)], 1);
    let g = GraphPair::new(&t);
    let mut tape = Tape::<f32>::new();
    let p = ps.bind(&mut tape, false);
    let x = tape.constant(Matrix::from_vec(2, 3, vec![0.1f32, 0.2, 0.3, 0.0, -0.1, -0.2]));
    let c = tape.constant(Matrix::column(vec![1.0f32, 0.0]));
    let out = policy.forward(&mut tape, &p, x, &g, c).unwrap();
    let v = tape.value(out.actions).get(0, 0);
    assert!(v > 0.0 && v < 1.0);
}

#[test]
fn replica_pass_matches_per_slice_values() {
    let cfg = ModelConfig::tiny(3, 2, prefs(4));
    let (_, _, qs, value) = build(&cfg, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let t = random_topology(&mut rng, 5, 9, 2);
    let x = random_state(&mut rng, 5, 3);
    let slices = (0..4)
        .map(|_| {
            let v = (0..t.edge_count() * 2).map(|_| rng.random_range(0.0..1.0)).collect();
            EdgeActions::from_values(t.edge_count(), 2, v).unwrap()
        })
        .collect();
    let a = ActionTensor::new(slices).unwrap();
    let slow = value_per_pref(&value, &qs, &x, &a, &GraphPair::new(&t)).unwrap();
    let fast = value_diag(&value, &qs, &x, &a, &PreparedGraph::new(&t, 4).unwrap()).unwrap();
    for (s, f) in slow.iter().zip(&fast) {
        assert!((s - f).abs() < 1e-12, "{s} vs {f}");
    }
}

#[test]
fn capability_reads_the_second_entry() {
    let x = NodeStateMatrix::new(3, vec![1.0, 0.4, 0.0, 1.0, -0.2, 0.5]).unwrap();
    assert_eq!(capability_from_state(&x), vec![0.4, 0.0]);
}
