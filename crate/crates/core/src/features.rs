//! Decision-time features and supervised training samples.
//!
//! Feature layout for a decision on day `t` (fixed, `FeatureSpec::dim` long):
//! the last `demand_history` demands oldest first, the lead times of the
//! previous `lead_history` orders on the same path (days `t - R`, `t - 2R`,
//! ...), the quantile benchmark, the four covariates of day `t`, the SKU and
//! DC ids scaled to `(0, 1]`, and the product's mean demand so far.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{CostParams, SystemConfig};
use crate::data::{ProductSeries, ScenarioSet, N_COVARIATES};
use crate::dynamics::InventoryState;
use crate::error::{Error, Result};
use crate::heuristics::{quantile, quantile_benchmark};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub demand_history: usize,
    pub lead_history: usize,
    /// Quantile level of the benchmark feature.
    pub tau: f64,
}

impl FeatureSpec {
    pub fn new(params: &CostParams) -> Self {
        Self {
            demand_history: 8,
            lead_history: 2,
            tau: params.critical_ratio(),
        }
    }

    pub fn dim(&self) -> usize {
        self.demand_history + self.lead_history + 1 + N_COVARIATES + 2 + 1
    }

    /// Index of the benchmark value within the feature vector.
    pub fn benchmark_index(&self) -> usize {
        self.demand_history + self.lead_history
    }

    /// Earliest day with a complete history.
    pub fn warmup(&self, r: usize) -> usize {
        self.demand_history.max(self.lead_history * r).max(1)
    }
}

fn past_leads(series: &ProductSeries, t: usize, r: usize) -> Vec<f64> {
    (1..=t / r)
        .filter_map(|j| series.leadtime[t - j * r].map(|l| l as f64))
        .collect()
}

/// Benchmark order for day `t` from the full history before `t`.
pub fn benchmark_value(series: &ProductSeries, t: usize, r: usize, tau: f64) -> Result<f64> {
    let leads = past_leads(series, t, r);
    quantile_benchmark(&series.demand[..t], &leads, tau)
}

/// Demand quantile and mean lead time behind the benchmark on day `t`.
pub fn benchmark_parts(series: &ProductSeries, t: usize, r: usize, tau: f64) -> Result<(f64, f64)> {
    let leads = past_leads(series, t, r);
    if leads.is_empty() {
        return Err(Error::Empty("benchmark needs at least one past lead time"));
    }
    let mean_lead = leads.iter().sum::<f64>() / leads.len() as f64;
    Ok((quantile(&series.demand[..t], tau)?, mean_lead))
}

/// Features for a decision on day `t`, or `None` if the history is incomplete.
pub fn decision_features(
    series: &ProductSeries,
    skus: usize,
    dcs: usize,
    t: usize,
    r: usize,
    spec: &FeatureSpec,
) -> Option<Vec<f64>> {
    if t < spec.warmup(r) || t >= series.len() {
        return None;
    }
    let mut x = Vec::with_capacity(spec.dim());
    x.extend_from_slice(&series.demand[t - spec.demand_history..t]);
    for j in 1..=spec.lead_history {
        x.push(series.leadtime[t - j * r]? as f64);
    }
    x.push(benchmark_value(series, t, r, spec.tau).ok()?);
    x.extend_from_slice(&series.covariates[t]);
    x.push((series.sku + 1) as f64 / skus.max(1) as f64);
    x.push((series.dc + 1) as f64 / dcs.max(1) as f64);
    x.push(series.demand[..t].iter().sum::<f64>() / t as f64);
    Some(x)
}

/// One supervised example: features, pre-decision state and realised future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub product: usize,
    pub day: usize,
    pub x: Vec<f64>,
    pub state: InventoryState,
    /// Demands on days `day .. day + K + Lbar`.
    pub demands: Vec<f64>,
    /// Lead times of this order and of the next order on the same path.
    pub leads: [usize; 2],
}

/// Which days are ordering epochs when building samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochGrid {
    /// Every day; each day belongs to one of the `R` shifted paths.
    Daily,
    Every {
        offset: usize,
        interval: usize,
    },
}

impl EpochGrid {
    fn contains(&self, t: usize) -> bool {
        match *self {
            EpochGrid::Daily => true,
            EpochGrid::Every { offset, interval } => t >= offset && (t - offset).is_multiple_of(interval),
        }
    }
}

/// States observed at each epoch, per product.
pub type StateBook = Vec<HashMap<usize, InventoryState>>;

/// Slide over the first `t_in` days and keep every epoch whose history and
/// future windows are complete. States default to empty unless a book of
/// pre-sampled states is given.
pub fn build_samples(
    set: &ScenarioSet,
    config: &SystemConfig,
    spec: &FeatureSpec,
    grid: EpochGrid,
    states: Option<&StateBook>,
) -> Result<Vec<TrainingSample>> {
    let window = config.demand_window();
    let mut out = Vec::new();
    for (p, series) in set.products.iter().enumerate() {
        let end = config.t_in.min(series.len());
        for t in spec.warmup(config.r)..end {
            if !grid.contains(t) || t + window > end || t + config.r >= end {
                continue;
            }
            let (Some(l0), Some(l1)) = (series.leadtime[t], series.leadtime[t + config.r]) else {
                continue;
            };
            let Some(x) = decision_features(series, set.skus, set.dcs, t, config.r, spec) else {
                continue;
            };
            let state = match states {
                Some(book) => match book.get(p).and_then(|m| m.get(&t)) {
                    Some(s) => s.clone(),
                    None => continue,
                },
                None => InventoryState::zeros(config.k, config.lbar),
            };
            let clamp = |l: usize| l.clamp(1, config.lbar);
            out.push(TrainingSample {
                product: p,
                day: t,
                x,
                state,
                demands: series.demand[t..t + window].to_vec(),
                leads: [clamp(l0), clamp(l1)],
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(
            "in-sample horizon too short for any training sample",
        ));
    }
    Ok(out)
}

/// Per-feature mean and standard deviation, for standardising inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("no rows to standardise"));
        }
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n as f64;
            }
        }
        let mut sd = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let sd = sd
            .into_iter()
            .map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize) -> ProductSeries {
        ProductSeries {
            sku: 1,
            dc: 0,
            demand: (0..n).map(|t| t as f64).collect(),
            leadtime: (0..n).map(|t| Some(1 + t % 3)).collect(),
            covariates: vec![[0.5; 4]; n],
        }
    }

    #[test]
    fn feature_layout() {
        let s = series(40);
        let spec = FeatureSpec {
            demand_history: 3,
            lead_history: 2,
            tau: 0.5,
        };
        let x = decision_features(&s, 2, 4, 10, 2, &spec).unwrap();
        assert_eq!(x.len(), spec.dim());
        assert_eq!(&x[..3], &[7.0, 8.0, 9.0]);
        assert_eq!(&x[3..5], &[3.0, 1.0]);
        assert_eq!(
            x[spec.benchmark_index()],
            benchmark_value(&s, 10, 2, 0.5).unwrap()
        );
        assert_eq!(&x[10..12], &[1.0, 0.25]);
        assert_eq!(x[12], 4.5);
        assert!(decision_features(&s, 2, 4, 3, 2, &spec).is_none());
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let rows = [[1.0, 5.0], [3.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
    }
}
