//! Desk-scale run: generate, train, select λ*, evaluate on test weeks.
//! Usage: cargo run --release -p gpp-core --example desk_run -- [epochs] [Z] [all|dc]
//! GPP_BENCHMARK=1 starts from the benchmark preset instead of the defaults.

use gpp::pipeline::{evaluate_test, load_corpus, select_preferences, train_agent, RunConfig};
use gpp::synth::generate;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base = if std::env::var("GPP_BENCHMARK").is_ok() { RunConfig::benchmark() } else { RunConfig::default() };
    let mut cfg = base.seeded();
    if let Some(e) = args.get(1) {
        cfg.train.epochs = e.parse().expect("epochs");
    }
    if let Some(z) = args.get(2) {
        cfg.sim.mc_draws = z.parse().expect("Z");
    }
    if args.get(3).is_some_and(|s| s == "dc") {
        cfg.model.reward_scope = Some(gpp::actor_critic::RewardScope::Distribution);
    }
    if std::env::var("GPP_Q_SCALE").is_ok_and(|v| v == "node") {
        cfg.train.q_scale = gpp::trainer::QScale::PerNodeStep;
    }
    if let Ok(eta) = std::env::var("GPP_ETA") {
        cfg.train.eta = eta.parse().expect("eta");
    }
    if let Ok(b) = std::env::var("GPP_BIAS") {
        cfg.model.policy_bias = Some(b.parse().expect("bias"));
    }
    if std::env::var("GPP_PATIENCE").is_ok_and(|v| v == "none") {
        cfg.train.patience = None;
    }
    eprintln!("model {:?} train {:?}", cfg.model, cfg.train);
    let t0 = Instant::now();
    let raw = generate(&cfg.gen).expect("generate");
    let data = load_corpus(&raw).expect("load");
    eprintln!("generated {} SKUs in {:?}", data.len(), t0.elapsed());
    let t = Instant::now();
    let out = train_agent(&data, &cfg, None).expect("train");
    eprintln!(
        "trained {} iterations in {:?}; best epoch {:?}; val {:?}",
        out.history.iterations,
        t.elapsed(),
        out.history.best_epoch,
        out.history.validation_td_loss
    );
    let agent = if std::env::var("GPP_USE_LAST").is_ok() { &out.last } else { &out.agent };
    eprintln!("evaluating {}", if std::ptr::eq(agent, &out.last) { "last agent" } else { "kept agent" });
    let t = Instant::now();
    let v = select_preferences(&data, agent, &cfg).expect("validate");
    eprintln!("validated in {:?}: selected {:?}", t.elapsed(), v.selected);
    for (o, c) in v.objectives.iter().zip(&v.avg_cost) {
        eprintln!("  {}: {:?}", o.name, c.iter().map(|x| x.round()).collect::<Vec<_>>());
    }
    let t = Instant::now();
    let r = evaluate_test(&data, agent, &v.selected, &cfg).expect("test");
    eprintln!("tested in {:?}", t.elapsed());
    for s in r.summaries.iter().flatten() {
        let last = s.percent.rows.last().unwrap();
        eprintln!(
            "  {:>10} {:>8}: cost {:.0}  %OOS13 {:?} %ES13 {:?}",
            s.label, s.objective, s.total_cost, last.oos_mean, last.es_mean
        );
    }
    eprintln!("total {:?}", t0.elapsed());
}
