//! Scores a hand-written order-up-to policy on the default corpus: each DC
//! receives `max(f_ref − f, 0)` where `f` is its furthest-ahead imbalance.
//! A reference point for what the learned policy should at least match.

use gpp::diff::Matrix;
use gpp::gat::GraphPair;
use gpp::netmodel::{NodeKind, NodeStateMatrix, Topology};
use gpp::pipeline::{evaluate_test, load_corpus, select_preferences, RunConfig};
use gpp::sim::{PolicyModel, SimError};
use gpp::synth::generate;

struct OrderUpTo {
    levels: Vec<f64>,
}

impl PolicyModel for OrderUpTo {
    fn pref_count(&self) -> usize {
        self.levels.len()
    }

    fn act(&self, topo: &Topology, _rep: &GraphPair, states: &[NodeStateMatrix]) -> Result<Matrix<f64>, SimError> {
        let (e, m) = (topo.edge_count(), topo.mot_count());
        let mut out = Matrix::zeros(states.len() * e, self.levels.len() * m);
        for (c, x) in states.iter().enumerate() {
            for (i, &(_, d)) in topo.edges().iter().enumerate() {
                if topo.kind(d) != NodeKind::Distribution {
                    continue;
                }
                let share = 1.0 / topo.in_edges(d).len() as f64;
                for (l, &f_ref) in self.levels.iter().enumerate() {
                    out.set(c * e + i, l * m, (f_ref - x.last(d)).max(0.0) * share);
                }
            }
        }
        Ok(out)
    }
}

fn main() {
    let mut cfg = RunConfig::default().seeded();
    cfg.sim.mc_draws = std::env::args().nth(1).map_or(5, |z| z.parse().expect("Z"));
    let data = load_corpus(&generate(&cfg.gen).expect("generate")).expect("load");
    let model = OrderUpTo {
        levels: cfg.prefs.iter().map(|p| p.f_ref).collect(),
    };
    let v = select_preferences(&data, &model, &cfg).expect("validate");
    for (o, c) in v.objectives.iter().zip(&v.avg_cost) {
        eprintln!("  {}: {:?}", o.name, c.iter().map(|x| x.round()).collect::<Vec<_>>());
    }
    eprintln!("selected {:?}", v.selected);
    let r = evaluate_test(&data, &model, &v.selected, &cfg).expect("test");
    for s in r.summaries.iter().flatten() {
        let last = s.percent.rows.last().unwrap();
        eprintln!(
            "  {:>10} {:>8}: cost {:.0}  %OOS13 {:?} %ES13 {:?}",
            s.label, s.objective, s.total_cost, last.oos_mean, last.es_mean
        );
    }
}
