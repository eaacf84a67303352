use crate::manifest::Manifest;
use crate::{CliError, Command, Common};
use anyhow::Context;
use gpp::netmodel::{RawDataset, SkuData};
use gpp::pipeline::{
    contexts, evaluate_test, load_corpus, select_preferences, train_agent, RunConfig, TestReport,
};
use gpp::sim::{plan, ValidationReport};
use gpp::synth::generate;
use gpp::trainer::Agent;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub fn name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Train { .. } => "train",
        Command::Validate { .. } => "validate",
        Command::Plan { .. } => "plan",
        Command::Evaluate { .. } => "evaluate",
        Command::Report { .. } => "report",
    }
}

type Res<T> = Result<T, CliError>;

fn load_config(c: &Common) -> Res<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::missing(format!("config {}: {e}", p.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(z) = c.mc_draws {
        cfg.sim.mc_draws = z;
    }
    if let Some(j) = c.horizon {
        cfg.sim.horizon = j;
    }
    Ok(cfg)
}

fn checked(cfg: RunConfig) -> Res<RunConfig> {
    let cfg = cfg.seeded();
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

/// Artifact body with the config echo and seed.
fn wrap<T: Serialize>(cfg: &RunConfig, key: &str, value: &T) -> anyhow::Result<Vec<u8>> {
    let mut doc = serde_json::Map::new();
    doc.insert("seed".into(), json!(cfg.seed));
    doc.insert("config".into(), serde_json::to_value(cfg)?);
    doc.insert(key.into(), serde_json::to_value(value)?);
    Ok((serde_json::to_string_pretty(&Value::Object(doc))? + "\n").into_bytes())
}

fn read_corpus(dir: &Path) -> Res<Vec<SkuData>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::missing(format!("data {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::missing(format!("no dataset files in {}", dir.display())));
    }
    let mut raw = Vec::with_capacity(files.len());
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| CliError::missing(format!("{}: {e}", f.display())))?;
        raw.push(RawDataset::from_json(&text).map_err(|e| CliError::runtime(format!("{}: {e}", f.display())))?);
    }
    load_corpus(&raw).map_err(|e| CliError::runtime(e.to_string()))
}

fn read_agent(path: &Path) -> Res<Agent> {
    if !path.exists() {
        return Err(CliError::missing(format!("checkpoint {} does not exist", path.display())));
    }
    Agent::load(path).map_err(|e| CliError::runtime(format!("checkpoint {}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct ValidationDoc {
    validation: ValidationReport,
}

#[derive(Serialize, Deserialize)]
struct EvaluationDoc {
    seed: u64,
    config: RunConfig,
    evaluation: EvaluationBody,
}

#[derive(Serialize, Deserialize)]
struct EvaluationBody {
    report: TestReport,
    validation: Option<ValidationReport>,
}

pub fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Gen { common, skus } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = skus {
                cfg.gen.sku_count = s;
            }
            let cfg = checked(cfg)?;
            let corpus = generate(&cfg.gen).map_err(|e| CliError::usage(e.to_string()))?;
            let mut m = Manifest::open(&common.out)?;
            for raw in &corpus {
                m.write(&format!("data/{}.json", raw.sku), (raw.to_json() + "\n").as_bytes())?;
            }
            m.write("gen_config.json", &wrap(&cfg, "skus", &corpus.len())?)?;
            m.save()?;
            println!("{}", json!({"command": "gen", "skus": corpus.len(), "data": common.out.join("data")}));
        }
        Command::Train { common, data, epochs } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let cfg = checked(cfg)?;
            let corpus = read_corpus(&data)?;
            let ckpt = common.out.join("checkpoints");
            let out = train_agent(&corpus, &cfg, Some(&ckpt)).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut m = Manifest::open(&common.out)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&ckpt)
                .context("listing checkpoints")?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            files.sort();
            for f in files {
                m.record(&f)?;
            }
            let h = &out.history;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["epoch", "train_td_loss", "actor_objective", "validation_td_loss"])
                .context("csv")?;
            for e in 0..h.train_td_loss.len() {
                let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
                w.write_record([
                    (e + 1).to_string(),
                    format!("{:.10e}", h.train_td_loss[e]),
                    opt(h.actor_objective[e]),
                    opt(h.validation_td_loss[e]),
                ])
                .context("csv")?;
            }
            m.write("loss_curves.csv", &w.into_inner().context("csv")?)?;
            m.write("train.json", &wrap(&cfg, "history", h)?)?;
            m.save()?;
            println!(
                "{}",
                json!({"command": "train", "iterations": h.iterations, "best_epoch": h.best_epoch,
                       "model": ckpt.join("model.ckpt")})
            );
        }
        Command::Validate { common, data, model, runs } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = runs {
                cfg.validation_runs = r;
            }
            let corpus = read_corpus(&data)?;
            let agent = read_agent(&model)?;
            cfg.prefs = agent.config.prefs.clone();
            let cfg = checked(cfg)?;
            let v = select_preferences(&corpus, &agent, &cfg).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut m = Manifest::open(&common.out)?;
            m.write("validation.json", &wrap(&cfg, "validation", &v)?)?;
            m.save()?;
            for (o, &l) in v.objectives.iter().zip(&v.selected) {
                let p = &agent.config.prefs[l];
                println!(
                    "{}",
                    json!({"objective": o.name, "lambda": l, "c1": p.c1, "c2": p.c2, "f_ref": p.f_ref,
                           "avg_cost": v.avg_cost[v.objectives.iter().position(|x| x == o).unwrap_or(0)][l]})
                );
            }
            println!("{}", json!({"validation_loss": v.validation_loss}));
        }
        Command::Plan { common, data, model, sku, week } => {
            let mut cfg = load_config(&common)?;
            let corpus = read_corpus(&data)?;
            let agent = read_agent(&model)?;
            cfg.prefs = agent.config.prefs.clone();
            let cfg = checked(cfg)?;
            let ctxs = contexts(&corpus);
            let ctx = ctxs
                .iter()
                .find(|c| c.data.sku == sku)
                .ok_or_else(|| CliError::missing(format!("unknown SKU {sku}")))?;
            let idx = ctx
                .data
                .index_of(week)
                .ok_or_else(|| CliError::missing(format!("SKU {sku} has no week {week}")))?;
            let r = plan(ctx, &agent, idx, &cfg.sim, &cfg.objectives).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut m = Manifest::open(&common.out)?;
            let path = m.write(&format!("plan_{sku}_{week}.json"), &wrap(&cfg, "plan", &r)?)?;
            m.save()?;
            println!("{}", json!({"command": "plan", "selected": r.selected, "path": path}));
        }
        Command::Evaluate {
            common,
            data,
            model,
            selection,
            prefs,
            runs,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = runs {
                cfg.test_runs = r;
            }
            let corpus = read_corpus(&data)?;
            let agent = read_agent(&model)?;
            cfg.prefs = agent.config.prefs.clone();
            let cfg = checked(cfg)?;
            let (selected, validation) = match (selection, prefs) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| CliError::missing(format!("selection {}: {e}", p.display())))?;
                    let doc: ValidationDoc = serde_json::from_str(&text)
                        .map_err(|e| CliError::usage(format!("selection {}: {e}", p.display())))?;
                    (doc.validation.selected.clone(), Some(doc.validation))
                }
                (None, Some(p)) => (p, None),
                (None, None) => return Err(CliError::usage("evaluate needs --selection or --prefs")),
            };
            if selected.iter().any(|&l| l >= agent.config.pref_count()) {
                return Err(CliError::usage("preference index outside the model's grid"));
            }
            let report =
                evaluate_test(&corpus, &agent, &selected, &cfg).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut m = Manifest::open(&common.out)?;
            let body = EvaluationBody { report, validation };
            m.write("evaluation.json", &wrap(&cfg, "evaluation", &body)?)?;
            m.save()?;
            for s in body.report.summaries.iter().flatten() {
                println!("{}", json!({"objective": s.objective, "policy": s.label, "total_cost": s.total_cost}));
            }
        }
        Command::Report { common, evaluation } => {
            let text = std::fs::read_to_string(&evaluation)
                .map_err(|e| CliError::missing(format!("evaluation {}: {e}", evaluation.display())))?;
            let doc: EvaluationDoc = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("evaluation {}: {e}", evaluation.display())))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "objective", "policy", "step", "es_mean", "es_sd", "oos_mean", "oos_sd", "cost_mean", "cost_sd",
            ])
            .context("csv")?;
            let cell = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
            for s in doc.evaluation.report.summaries.iter().flatten() {
                for r in &s.percent.rows {
                    let step = if r.step == 0 { "total".to_string() } else { r.step.to_string() };
                    w.write_record([
                        s.objective.clone(),
                        s.label.clone(),
                        step,
                        cell(r.es_mean),
                        cell(r.es_sd),
                        cell(r.oos_mean),
                        cell(r.oos_sd),
                        cell(r.cost_mean),
                        cell(r.cost_sd),
                    ])
                    .context("csv")?;
                }
            }
            let ev = &doc.evaluation;
            let body = json!({
                "selected": ev.report.selected,
                "selected_prefs": ev.report.selected_prefs,
                "avg_cost_per_lambda": ev.validation.as_ref().map(|v| &v.avg_cost),
                "validation_loss": ev.validation.as_ref().map(|v| v.validation_loss),
                "policies": ev.report.summaries.iter().flatten().map(|s| json!({
                    "objective": s.objective,
                    "policy": s.label,
                    "total_cost": s.total_cost,
                    "percent": s.percent,
                    "oos_histogram": s.oos_histogram,
                    "es_histogram": s.es_histogram,
                })).collect::<Vec<_>>(),
            });
            let mut m = Manifest::open(&common.out)?;
            m.write("report.csv", &w.into_inner().context("csv")?)?;
            m.write("report.json", &wrap(&doc.config, "report", &body)?)?;
            m.save()?;
            println!("{}", json!({"command": "report", "csv": common.out.join("report.csv")}));
        }
    }
    Ok(())
}
