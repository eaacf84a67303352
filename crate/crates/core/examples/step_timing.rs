//! Wall time of the three training steps on real samples.

use gpp::pipeline::{load_corpus, samples, RunConfig};
use gpp::synth::generate;
use gpp::trainer::{actor_step, critic_step, ActorLoss, Agent, Targets};
use gpp::netmodel::Split;
use std::time::Instant;

fn main() {
    let cfg = RunConfig::default().seeded();
    let data = load_corpus(&generate(&cfg.gen).unwrap()).unwrap();
    let model = cfg.model_config(2);
    let tr = samples(&data, Split::Train, &model).unwrap();
    let mut agent = Agent::new(model, 0);
    let targets = Targets::new(&agent);
    let mut copt = gpp::Adam::new(&agent.critic, 1e-3);
    let mut aopt = gpp::Adam::new(&agent.actor, 1e-3);
    let batches: Vec<Vec<&gpp::trainer::Sample>> = tr.chunks(4).take(std::env::var("N").map_or(40, |n| n.parse().unwrap())).map(|c| c.iter().collect()).collect();
    for (name, mode) in [("critic warmup", 0), ("critic", 1), ("actor", 2)] {
        let t = Instant::now();
        for b in &batches {
            match mode {
                0 => critic_step(&mut agent, &targets, b, 0.95, true, &mut copt).map(|_| ()).unwrap(),
                1 => critic_step(&mut agent, &targets, b, 0.95, false, &mut copt).map(|_| ()).unwrap(),
                _ => actor_step(&mut agent, b, ActorLoss::new(1.0), &mut aopt).map(|_| ()).unwrap(),
            }
        }
        println!("{name}: {:.1} ms/iter", t.elapsed().as_secs_f64() * 1e3 / batches.len() as f64);
    }
}
