//! End-to-end orchestration shared by the command line and the acceptance
//! suite: corpus loading, training, λ* selection and test evaluation.

use crate::actor_critic::{ModelConfig, RewardScope, RiskPreference};
use crate::netmodel::{NetError, RawDataset, SkuData, Split};
use crate::sim::{
    evaluate, histogram, percent_metrics, split_starts, step_cost, validate, CostObjective, Episode, Histogram,
    PercentMetrics, PolicyKind, PolicyModel, SimError, SimSettings, SkuContext, ValidationReport,
};
use crate::synth::GenConfig;
use crate::trainer::{prepare_samples, train, Agent, Keep, QScale, Sample, TrainConfig, TrainError, TrainOutcome};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config: {0}")]
    Config(String),
}

/// Network sizes; `None` keeps the standard value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOverrides {
    pub heads: Option<usize>,
    pub gat_x: Option<Vec<usize>>,
    pub gat_xa: Option<Vec<usize>>,
    pub mlp_mu: Option<Vec<usize>>,
    pub mlp_q: Option<Vec<usize>>,
    pub reward_scope: Option<RewardScope>,
    pub policy_bias: Option<f64>,
}

/// The single reproducibility document of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub model: ModelOverrides,
    pub sim: SimSettings,
    pub prefs: Vec<RiskPreference>,
    pub objectives: Vec<CostObjective>,
    /// Evaluation realizations on validation weeks.
    pub validation_runs: usize,
    /// Evaluation realizations on test weeks.
    pub test_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            model: ModelOverrides::default(),
            sim: SimSettings::default(),
            prefs: RiskPreference::default_grid(),
            objectives: CostObjective::defaults(),
            validation_runs: 1,
            test_runs: 3,
        }
    }
}

impl RunConfig {
    /// Propagates the top-level seed into every component.
    pub fn seeded(mut self) -> Self {
        self.gen.seed = self.seed;
        self.train.seed = self.seed;
        self.sim.seed = self.seed;
        self
    }

    /// Settings under which the learned policy beats both baselines on the
    /// default corpus: distribution-node reward, per-node Q scale with a
    /// stronger regularizer, a low initial shipping fraction, and the
    /// final-epoch agent.
    pub fn benchmark() -> Self {
        let mut cfg = Self::default();
        cfg.model.reward_scope = Some(RewardScope::Distribution);
        cfg.model.policy_bias = Some(-4.0);
        cfg.train.q_scale = QScale::PerNodeStep;
        cfg.train.eta = 20.0;
        cfg.train.patience = None;
        cfg.train.keep = Keep::Last;
        cfg
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.gen.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate()?;
        if self.prefs.is_empty() {
            return Err(PipelineError::Config("at least one risk preference is required".into()));
        }
        for p in &self.prefs {
            p.validate().map_err(|e| PipelineError::Config(e.0.clone()))?;
        }
        if self.objectives.is_empty() {
            return Err(PipelineError::Config("at least one objective is required".into()));
        }
        if self.objectives.iter().any(|o| !(o.c_es >= 0.0 && o.c_oos >= 0.0)) {
            return Err(PipelineError::Config("objective costs must be nonnegative".into()));
        }
        let s = &self.sim;
        if s.horizon == 0 || s.k < 2 || s.mc_draws == 0 {
            return Err(PipelineError::Config("need J >= 1, K >= 2 and Z >= 1".into()));
        }
        if self.gen.forecast_steps < s.horizon + s.k - 2 {
            return Err(PipelineError::Config(format!(
                "forecasts cover {} steps, planning needs J + K - 2 = {}",
                self.gen.forecast_steps,
                s.horizon + s.k - 2
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, mot_count: usize) -> ModelConfig {
        let mut m = ModelConfig::standard(self.sim.k, mot_count);
        m.prefs = self.prefs.clone();
        m.gamma = self.train.gamma;
        let o = &self.model;
        if let Some(h) = o.heads {
            m.gat_x.heads = h;
            m.gat_xa.heads = h;
        }
        if let Some(d) = &o.gat_x {
            m.gat_x.dims = d.clone();
        }
        if let Some(d) = &o.gat_xa {
            m.gat_xa.dims = d.clone();
        }
        if let Some(d) = &o.mlp_mu {
            m.mlp_mu = d.clone();
        }
        if let Some(d) = &o.mlp_q {
            m.mlp_q = d.clone();
        }
        if let Some(s) = o.reward_scope {
            m.reward_scope = s;
        }
        if let Some(b) = o.policy_bias {
            m.policy_bias = b;
        }
        m
    }
}

pub fn load_corpus(raw: &[RawDataset]) -> Result<Vec<SkuData>, PipelineError> {
    raw.iter().map(|r| SkuData::load(r).map_err(Into::into)).collect()
}

pub fn contexts(data: &[SkuData]) -> Vec<SkuContext<'_>> {
    data.iter().enumerate().map(|(i, d)| SkuContext::new(i, d)).collect()
}

/// Transitions of `split` from every SKU, in SKU then week order.
pub fn samples(data: &[SkuData], split: Split, model: &ModelConfig) -> Result<Vec<Sample>, PipelineError> {
    let mut ts = Vec::new();
    for (i, d) in data.iter().enumerate() {
        ts.extend(d.transitions(i, split, model.k)?);
    }
    Ok(prepare_samples(&ts, model)?)
}

fn mot_count(data: &[SkuData]) -> Result<usize, PipelineError> {
    let m = data.first().map(SkuData::mot_count).ok_or_else(|| PipelineError::Config("empty corpus".into()))?;
    if data.iter().any(|d| d.mot_count() != m) {
        return Err(PipelineError::Config("SKUs disagree on the MOT list".into()));
    }
    Ok(m)
}

/// Trains on the train split and early-stops on validation transitions.
pub fn train_agent(data: &[SkuData], cfg: &RunConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, PipelineError> {
    let model = cfg.model_config(mot_count(data)?);
    let tr = samples(data, Split::Train, &model)?;
    let va = samples(data, Split::Validation, &model)?;
    let init = Agent::new(model, cfg.train.seed);
    Ok(train(init, &tr, &va, &cfg.train, out_dir)?)
}

/// Per-objective λ* on validation weeks.
pub fn select_preferences(
    data: &[SkuData],
    agent: &dyn PolicyModel,
    cfg: &RunConfig,
) -> Result<ValidationReport, PipelineError> {
    let ctxs = contexts(data);
    let starts = split_starts(&ctxs, Split::Validation, cfg.sim.horizon);
    if starts.is_empty() {
        return Err(PipelineError::Config(
            "no validation week has a full horizon of actuals".into(),
        ));
    }
    let settings = SimSettings {
        eval_runs: cfg.validation_runs,
        ..cfg.sim.clone()
    };
    Ok(validate(&ctxs, agent, &starts, &settings, &cfg.objectives)?)
}

/// One policy's test results under one objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub objective: String,
    /// Horizon cost summed over SKUs and start weeks, averaged over runs.
    pub total_cost: f64,
    pub percent: PercentMetrics,
    /// Node-interval OOS (scaled, ≤ 0) at distribution nodes.
    pub oos_histogram: Histogram,
    /// Node-interval ES (scaled) at distribution nodes.
    pub es_histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub objectives: Vec<CostObjective>,
    pub selected: Vec<usize>,
    pub selected_prefs: Vec<RiskPreference>,
    pub start_weeks: usize,
    pub runs: usize,
    /// `[objective] → [historical, rule, gpp]`.
    pub summaries: Vec<Vec<PolicySummary>>,
}

impl TestReport {
    pub fn summary(&self, objective: usize, label_prefix: &str) -> Option<&PolicySummary> {
        self.summaries[objective].iter().find(|s| s.label.starts_with(label_prefix))
    }
}

pub const OOS_BINS: (f64, f64, usize) = (-1.0, 0.0, 20);
pub const ES_BINS: (f64, f64, usize) = (0.0, 2.0, 20);

fn summarize(label: &str, eps: &[Episode], hist: &[Episode], ctxs: &[SkuContext], obj: &CostObjective) -> PolicySummary {
    let runs = eps.iter().map(|e| e.run).max().map_or(1, |r| r + 1);
    let total: f64 = eps
        .iter()
        .map(|e| e.steps.iter().map(|s| step_cost(&s.outcome(), ctxs[e.sku].data, obj)).sum::<f64>())
        .sum::<f64>()
        / runs as f64;
    let (mut oos, mut es) = (Vec::new(), Vec::new());
    for e in eps {
        let kinds = &ctxs[e.sku].data.kinds;
        for s in &e.steps {
            for v in 0..kinds.len() {
                if kinds[v] == crate::netmodel::NodeKind::Distribution {
                    oos.push(s.oos[v]);
                    es.push(s.es[v]);
                }
            }
        }
    }
    PolicySummary {
        label: label.to_string(),
        objective: obj.name.clone(),
        total_cost: total,
        percent: percent_metrics(label, eps, hist, ctxs, obj),
        oos_histogram: histogram(&oos, OOS_BINS.0, OOS_BINS.1, OOS_BINS.2),
        es_histogram: histogram(&es, ES_BINS.0, ES_BINS.1, ES_BINS.2),
    }
}

/// Test-week comparison of history, the rule, and the selected GPP policy
/// per objective, with common random numbers across policies.
pub fn evaluate_test(
    data: &[SkuData],
    agent: &dyn PolicyModel,
    selected: &[usize],
    cfg: &RunConfig,
) -> Result<TestReport, PipelineError> {
    if selected.len() != cfg.objectives.len() {
        return Err(PipelineError::Config("one selected preference per objective is required".into()));
    }
    if agent.pref_count() != cfg.prefs.len() || selected.iter().any(|&l| l >= cfg.prefs.len()) {
        return Err(PipelineError::Config("selected preferences must index the model's grid".into()));
    }
    let ctxs = contexts(data);
    let starts = split_starts(&ctxs, Split::Test, cfg.sim.horizon);
    if starts.is_empty() {
        return Err(PipelineError::Config("no test week has a full horizon of actuals".into()));
    }
    let settings = SimSettings {
        eval_runs: cfg.test_runs,
        ..cfg.sim.clone()
    };
    let hist = evaluate(&ctxs, &starts, PolicyKind::Historical, &settings)?;
    let rule = evaluate(&ctxs, &starts, PolicyKind::Rule, &settings)?;
    let mut gpp_cache: Vec<(usize, Vec<Episode>)> = Vec::new();
    let mut summaries = Vec::with_capacity(selected.len());
    for (oi, obj) in cfg.objectives.iter().enumerate() {
        let pref = selected[oi];
        if !gpp_cache.iter().any(|(p, _)| *p == pref) {
            let eps = evaluate(&ctxs, &starts, PolicyKind::Gpp { agent, pref }, &settings)?;
            gpp_cache.push((pref, eps));
        }
        let gpp = &gpp_cache.iter().find(|(p, _)| *p == pref).expect("cached").1;
        summaries.push(vec![
            summarize("historical", &hist, &hist, &ctxs, obj),
            summarize("rule", &rule, &hist, &ctxs, obj),
            summarize(&format!("gpp_{pref}"), gpp, &hist, &ctxs, obj),
        ]);
    }
    Ok(TestReport {
        objectives: cfg.objectives.clone(),
        selected: selected.to_vec(),
        selected_prefs: selected.iter().map(|&i| cfg.prefs[i]).collect(),
        start_weeks: starts.len(),
        runs: settings.eval_runs,
        summaries,
    })
}
