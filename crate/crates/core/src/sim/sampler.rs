use crate::netmodel::{ShipmentLog, Topology};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;

/// Log-scale dispersion whose mean-one lognormal noise has expected absolute
/// relative error `w`: `E|e^{σZ−σ²/2} − 1| = 2(2Φ(σ/2) − 1)`.
pub fn sigma_for_wmape(w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * std.inverse_cdf(((2.0 + w) / 4.0).min(1.0 - 1e-12))
}

/// WMAPE rising linearly from `first` at step 1 to `last` at step 13, flat
/// afterwards; step 0 (the current week) uses the step-1 value.
pub fn wmape_profile(first: f64, last: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|h| {
            let s = h.clamp(1, 13) as f64;
            first + (last - first) * (s - 1.0) / 12.0
        })
        .collect()
}

/// Mean-one lognormal multiplier with log-scale `sigma`.
pub fn lognormal_factor<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

/// Demand draws around a point forecast, dispersion by horizon step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSampler {
    pub sigma: Vec<f64>,
}

impl DemandSampler {
    pub fn from_wmape(profile: &[f64]) -> Self {
        Self {
            sigma: profile.iter().map(|&w| sigma_for_wmape(w)).collect(),
        }
    }

    pub fn deterministic() -> Self {
        Self { sigma: Vec::new() }
    }

    fn sigma_at(&self, h: usize) -> f64 {
        match self.sigma.last() {
            None => 0.0,
            Some(&last) => self.sigma.get(h).copied().unwrap_or(last),
        }
    }

    /// One path `D̂[h] = forecast[h] · noise_h`.
    pub fn sample<R: Rng + ?Sized>(&self, forecast: &[f64], rng: &mut R) -> Vec<f64> {
        forecast
            .iter()
            .enumerate()
            .map(|(h, &f)| f * lognormal_factor(rng, self.sigma_at(h)))
            .collect()
    }
}

/// Empirical lead-time histograms per `(source, destination, mot)` with a
/// per-MOT fallback.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeModel {
    per_edge: BTreeMap<(usize, usize, usize), Vec<(u32, f64)>>,
    per_mot: BTreeMap<usize, Vec<(u32, f64)>>,
    fallback: u32,
}

fn push_count(h: &mut Vec<(u32, f64)>, lead: u32) {
    match h.iter_mut().find(|(l, _)| *l == lead) {
        Some((_, c)) => *c += 1.0,
        None => {
            h.push((lead, 1.0));
            h.sort_by_key(|&(l, _)| l);
        }
    }
}

fn draw<R: Rng + ?Sized>(h: &[(u32, f64)], rng: &mut R) -> u32 {
    let total: f64 = h.iter().map(|p| p.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(l, c) in h {
        if u < c {
            return l;
        }
        u -= c;
    }
    h.last().expect("nonempty histogram").0
}

impl LeadTimeModel {
    /// Histograms of shipments sent in `[from, to)`.
    pub fn fit(log: &ShipmentLog, from: i64, to: i64, fallback: u32) -> Self {
        let mut m = Self {
            fallback,
            ..Default::default()
        };
        for s in log.records().iter().filter(|s| s.send_time >= from && s.send_time < to) {
            push_count(m.per_edge.entry((s.source, s.destination, s.mot)).or_default(), s.lead_time);
            push_count(m.per_mot.entry(s.mot).or_default(), s.lead_time);
        }
        m
    }

    /// Always `lead`.
    pub fn constant(lead: u32) -> Self {
        Self {
            fallback: lead,
            ..Default::default()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, src: usize, dst: usize, mot: usize, rng: &mut R) -> u32 {
        if let Some(h) = self.per_edge.get(&(src, dst, mot)) {
            return draw(h, rng);
        }
        if let Some(h) = self.per_mot.get(&mot) {
            return draw(h, rng);
        }
        self.fallback
    }

    /// One lead time per `(edge, mot)` of `topo`, row-major.
    pub fn sample_all<R: Rng + ?Sized>(&self, topo: &Topology, rng: &mut R) -> Vec<u32> {
        let m = topo.mot_count();
        let mut out = Vec::with_capacity(topo.edge_count() * m);
        for &(s, d) in topo.edges() {
            for k in 0..m {
                out.push(self.sample(s, d, k, rng));
            }
        }
        out
    }
}

/// How planning obtains plant output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductionMode {
    /// The production plan issued at the planning week.
    #[default]
    Replay,
    /// The plan times mean-one lognormal noise.
    Lognormal { sigma: f64 },
}

impl ProductionMode {
    pub fn sample<R: Rng + ?Sized>(&self, plan: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            ProductionMode::Replay => plan.to_vec(),
            ProductionMode::Lognormal { sigma } => plan.iter().map(|&p| p * lognormal_factor(rng, *sigma)).collect(),
        }
    }
}

/// Deterministic 64-bit mix of a seed and a stream of identifiers.
pub fn derive_seed(seed: u64, ids: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &id in ids {
        h ^= id.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_reproduces_the_target_absolute_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w in [0.3, 0.5] {
            let s = sigma_for_wmape(w);
            let n = 200_000;
            let mae: f64 = (0..n).map(|_| (lognormal_factor(&mut rng, s) - 1.0).abs()).sum::<f64>() / n as f64;
            assert!((mae - w).abs() < 0.01, "{w}: {mae}");
        }
        assert_eq!(sigma_for_wmape(0.0), 0.0);
    }

    #[test]
    fn profile_spans_the_range_and_stays_flat() {
        let p = wmape_profile(0.3, 0.5, 16);
        assert_eq!(p[0], 0.3);
        assert_eq!(p[1], 0.3);
        assert!((p[13] - 0.5).abs() < 1e-15);
        assert_eq!(p[15], p[13]);
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn lead_time_histogram_matches_counts() {
        let mut log = ShipmentLog::new(2);
        for (i, lead) in [1, 1, 1, 3].into_iter().enumerate() {
            log.push(crate::netmodel::Shipment {
                send_time: i as i64,
                source: 0,
                destination: 1,
                mot: 0,
                quantity: 1.0,
                lead_time: lead,
            })
            .unwrap();
        }
        let m = LeadTimeModel::fit(&log, 0, 10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let ones = (0..n).filter(|_| m.sample(0, 1, 0, &mut rng) == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.01);
        assert_eq!(m.sample(1, 0, 1, &mut rng), 2);
        assert_eq!(m.sample(1, 0, 0, &mut rng) % 2, 1);
    }

    #[test]
    fn zero_dispersion_returns_the_forecast() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = vec![1.0, 2.0, 3.0];
        assert_eq!(DemandSampler::deterministic().sample(&f, &mut rng), f);
        assert_eq!(DemandSampler::from_wmape(&[0.0; 3]).sample(&f, &mut rng), f);
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        let a = derive_seed(1, &[0, 1]);
        assert_eq!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 1]));
    }
}
