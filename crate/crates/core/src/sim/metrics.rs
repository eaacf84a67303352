use super::{CostObjective, Episode, SimError, SkuContext};
use crate::netmodel::NodeKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Index of the lowest average cost; ties go to the lower index.
pub fn select_policy(avg_cost: &[f64]) -> Result<usize, SimError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in avg_cost.iter().enumerate() {
        if c.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    best.map(|b| b.0).ok_or(SimError::EmptySelection)
}

/// `grid[objective][week][λ]` holds the last-step cost from week `t`; the
/// loss is the mean over objectives and weeks of the minimum over λ.
pub fn validation_loss(grid: &[Vec<Vec<f64>>]) -> Result<f64, SimError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for per_obj in grid {
        for per_week in per_obj {
            let i = select_policy(per_week)?;
            total += per_week[i];
            count += 1;
        }
    }
    if count == 0 {
        return Err(SimError::EmptySelection);
    }
    Ok(total / count as f64)
}

/// Fixed-edge histogram; values outside `[lo, hi)` land in the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Mean and sample SD over runs of a percentage relative to history;
/// `None` where the historical total is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentRow {
    /// 1-based step; 0 is the horizon total.
    pub step: usize,
    pub es_mean: Option<f64>,
    pub es_sd: Option<f64>,
    pub oos_mean: Option<f64>,
    pub oos_sd: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_sd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentMetrics {
    pub policy: String,
    pub objective: CostObjective,
    pub runs: usize,
    pub rows: Vec<PercentRow>,
}

/// Price-weighted raw `(ES, |OOS|, cost)` per step, summed over
/// distribution nodes.
fn step_values(ep: &Episode, ctxs: &[SkuContext], obj: &CostObjective) -> Vec<[f64; 3]> {
    let data = ctxs[ep.sku].data;
    let w = data.price * data.scaler.max_inventory();
    ep.steps
        .iter()
        .map(|s| {
            let (mut es, mut oos) = (0.0, 0.0);
            for v in 0..s.es.len() {
                if data.kinds[v] == NodeKind::Distribution {
                    es += s.es[v].abs() * w;
                    oos += s.oos[v].abs() * w;
                }
            }
            [es, oos, obj.c_es * es + obj.c_oos * oos]
        })
        .collect()
}

/// Per-run totals by step: `run → step → [ES, OOS, cost]` summed over SKUs and
/// start weeks.
fn run_totals(episodes: &[Episode], ctxs: &[SkuContext], obj: &CostObjective) -> BTreeMap<usize, Vec<[f64; 3]>> {
    let mut out: BTreeMap<usize, Vec<[f64; 3]>> = BTreeMap::new();
    for ep in episodes {
        let vals = step_values(ep, ctxs, obj);
        let slot = out.entry(ep.run).or_default();
        if slot.len() < vals.len() {
            slot.resize(vals.len(), [0.0; 3]);
        }
        for (a, b) in slot.iter_mut().zip(&vals) {
            for q in 0..3 {
                a[q] += b[q];
            }
        }
    }
    out
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// `%ES`, `%OOS`, `%Cost` of `policy` relative to `historical` per step and
/// over the horizon. Both episode sets must cover the same starts.
pub fn percent_metrics(
    label: &str,
    policy: &[Episode],
    historical: &[Episode],
    ctxs: &[SkuContext],
    obj: &CostObjective,
) -> PercentMetrics {
    let pol = run_totals(policy, ctxs, obj);
    let hist_runs = run_totals(historical, ctxs, obj);
    // history is deterministic; average in case several runs were supplied
    let steps = hist_runs.values().map(Vec::len).max().unwrap_or(0);
    let mut hist = vec![[0.0; 3]; steps];
    for v in hist_runs.values() {
        for (a, b) in hist.iter_mut().zip(v) {
            for q in 0..3 {
                a[q] += b[q] / hist_runs.len() as f64;
            }
        }
    }
    let total = |v: &[[f64; 3]]| {
        v.iter().fold([0.0; 3], |mut acc, x| {
            for q in 0..3 {
                acc[q] += x[q];
            }
            acc
        })
    };
    let mut rows = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let base = if step == 0 { total(&hist) } else { hist[step - 1] };
        let mut cols: [Vec<f64>; 3] = Default::default();
        for v in pol.values() {
            let p = if step == 0 {
                total(v)
            } else {
                v.get(step - 1).copied().unwrap_or([0.0; 3])
            };
            for q in 0..3 {
                cols[q].push(100.0 * p[q] / base[q]);
            }
        }
        let stat = |q: usize| {
            if base[q] == 0.0 || cols[q].is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&cols[q]);
                (Some(m), Some(s))
            }
        };
        let (es_mean, es_sd) = stat(0);
        let (oos_mean, oos_sd) = stat(1);
        let (cost_mean, cost_sd) = stat(2);
        rows.push(PercentRow {
            step,
            es_mean,
            es_sd,
            oos_mean,
            oos_sd,
            cost_mean,
            cost_sd,
        });
    }
    PercentMetrics {
        policy: label.to_string(),
        objective: obj.clone(),
        runs: pol.len(),
        rows,
    }
}
