//! Predict-then-optimise baseline: linear mean forecasters, a multivariate
//! normal model of their residuals, and proportional balancing over
//! scenarios sampled from the fitted distribution.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CostParams, SystemConfig};
use crate::data::ScenarioSet;
use crate::e2e::in_sample_cost;
use crate::error::{Error, Result};
use crate::features::{decision_features, FeatureSpec, Standardizer, TrainingSample};
use crate::heuristics::{beta_coefficient, pb_order, PbConfig, PbScenario};
use crate::policy::{Decision, Policy};
use crate::rng::substream;

pub const DEFAULT_RIDGE: f64 = 1e-3;
pub const DEFAULT_SCENARIOS: usize = 200;

/// Multi-output linear regression with an L2 penalty on standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeForecaster {
    pub inputs: Standardizer,
    /// One row per output: intercept followed by the input weights.
    pub weights: Vec<Vec<f64>>,
}

impl RidgeForecaster {
    /// Minimise mean squared error plus `lambda * |w|^2` (intercept unpenalised).
    pub fn fit(x: &[&[f64]], y: &[&[f64]], lambda: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: y.len(),
            });
        }
        let p = x[0].len();
        let m = y[0].len();
        if n < p + 1 {
            return Err(Error::ShortWindow {
                needed: p + 1,
                available: n,
            });
        }
        let inputs = Standardizer::fit(x)?;
        let xs = DMatrix::from_fn(n, p, |i, j| (x[i][j] - inputs.mean[j]) / inputs.sd[j]);
        let mut ymean = vec![0.0; m];
        for row in y {
            if row.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    actual: row.len(),
                });
            }
            for (a, v) in ymean.iter_mut().zip(row.iter()) {
                *a += v / n as f64;
            }
        }
        let yc = DMatrix::from_fn(n, m, |i, j| y[i][j] - ymean[j]);
        let gram = xs.transpose() * &xs / n as f64 + DMatrix::identity(p, p) * lambda;
        let rhs = xs.transpose() * yc / n as f64;
        let w = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge system not positive definite".into()))?
            .solve(&rhs);
        let weights = (0..m)
            .map(|j| {
                let mut row = vec![ymean[j]];
                row.extend((0..p).map(|i| w[(i, j)]));
                row
            })
            .collect();
        Ok(Self { inputs, weights })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let z = self.inputs.apply(x);
        self.weights
            .iter()
            .map(|row| row[0] + row[1..].iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Mean, covariance factor and per-coordinate bounds of forecast residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub mean: Vec<f64>,
    /// Row-major covariance after the diagonal ridge.
    pub covariance: Vec<Vec<f64>>,
    /// `A` with `A A^T = covariance`.
    pub factor: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ResidualModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A draw from the fitted normal, clamped to the historical range.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| {
                let v = self.mean[i]
                    + self.factor[i]
                        .iter()
                        .zip(&e)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                v.clamp(self.lower[i], self.upper[i])
            })
            .collect()
    }
}

pub fn fit_residual_mvn(residuals: &[Vec<f64>]) -> Result<ResidualModel> {
    let d = residuals.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::Empty("no residual vectors"));
    }
    let n = residuals.len();
    if n < d + 1 {
        return Err(Error::ShortWindow {
            needed: d + 1,
            available: n,
        });
    }
    if let Some(r) = residuals.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: r.len(),
        });
    }
    let mut mean = vec![0.0; d];
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for r in residuals {
        for i in 0..d {
            mean[i] += r[i] / n as f64;
            lower[i] = lower[i].min(r[i]);
            upper[i] = upper[i].max(r[i]);
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for r in residuals {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let ridge = 1e-6 * cov.trace() / d as f64;
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|v: f64| v.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    let rows = |m: &DMatrix<f64>| (0..d).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(ResidualModel {
        mean,
        covariance: rows(&cov),
        factor: rows(&factor),
        lower,
        upper,
    })
}

/// Fitted demand and lead-time forecasters with their residual models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtoModels {
    pub demand: RidgeForecaster,
    pub lead: RidgeForecaster,
    pub demand_residual: ResidualModel,
    pub lead_residual: ResidualModel,
}

/// Forecasters for the demand window and the two lead times, each fed the
/// full decision feature vector (demand and lead-time histories alike).
pub fn fit_forecasters(
    samples: &[TrainingSample],
    lambda: f64,
) -> Result<(RidgeForecaster, RidgeForecaster)> {
    let x: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let d: Vec<&[f64]> = samples.iter().map(|s| s.demands.as_slice()).collect();
    let leads: Vec<[f64; 2]> = samples.iter().map(|s| s.leads.map(|l| l as f64)).collect();
    let l: Vec<&[f64]> = leads.iter().map(|v| v.as_slice()).collect();
    Ok((
        RidgeForecaster::fit(&x, &d, lambda)?,
        RidgeForecaster::fit(&x, &l, lambda)?,
    ))
}

fn residuals(
    f: &RidgeForecaster,
    samples: &[TrainingSample],
    target: impl Fn(&TrainingSample) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            f.predict(&s.x)
                .iter()
                .zip(target(s))
                .map(|(p, y)| y - p)
                .collect()
        })
        .collect()
}

pub fn fit_pto(samples: &[TrainingSample], lambda: f64) -> Result<PtoModels> {
    let (demand, lead) = fit_forecasters(samples, lambda)?;
    let demand_residual = fit_residual_mvn(&residuals(&demand, samples, |s| s.demands.clone()))?;
    let lead_residual = fit_residual_mvn(&residuals(&lead, samples, |s| {
        s.leads.iter().map(|&l| l as f64).collect()
    }))?;
    Ok(PtoModels {
        demand,
        lead,
        demand_residual,
        lead_residual,
    })
}

/// `n` futures around the point forecast: demands clamped at zero, lead
/// times rounded down into `[1, Lbar]`.
pub fn sample_scenarios<R: Rng + ?Sized>(
    x: &[f64],
    models: &PtoModels,
    n: usize,
    rng: &mut R,
    config: &SystemConfig,
) -> Vec<PbScenario> {
    let dmean = models.demand.predict(x);
    let lmean = models.lead.predict(x);
    let lead = |v: f64| (v.floor().max(1.0) as usize).min(config.lbar);
    (0..n)
        .map(|_| {
            let e = models.demand_residual.sample(rng);
            let u = models.lead_residual.sample(rng);
            PbScenario {
                demands: dmean
                    .iter()
                    .zip(&e)
                    .map(|(m, v)| (m + v).max(0.0))
                    .collect(),
                lead: lead(lmean[0] + u[0]),
                next_lead: lead(lmean[1] + u[1]),
            }
        })
        .collect()
}

/// Proportional balancing over sampled scenarios. `beta_offset` is zero for
/// plain PB and the tuned shift for PPB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtoPolicy {
    pub models: PtoModels,
    pub config: SystemConfig,
    pub params: CostParams,
    pub spec: FeatureSpec,
    pub scenarios: usize,
    pub seed: u64,
    pub beta_offset: f64,
    pub tol: f64,
}

impl PtoPolicy {
    pub fn new(
        models: PtoModels,
        config: SystemConfig,
        params: CostParams,
        spec: FeatureSpec,
        seed: u64,
    ) -> Self {
        Self {
            models,
            config,
            params,
            spec,
            scenarios: DEFAULT_SCENARIOS,
            seed,
            beta_offset: 0.0,
            tol: 1e-6,
        }
    }

    pub fn with_offset(&self, beta_offset: f64) -> Self {
        Self {
            beta_offset,
            ..self.clone()
        }
    }

    /// Balancing weight at the predicted lead time of this order.
    pub fn beta(&self, x: &[f64]) -> f64 {
        let lead = self.models.lead.predict(x)[0].clamp(1.0, self.config.lbar as f64);
        beta_coefficient(self.config.k, lead, &self.params) + self.beta_offset
    }
}

impl Policy for PtoPolicy {
    fn name(&self) -> String {
        if self.beta_offset == 0.0 {
            "pto-pb".into()
        } else {
            format!("pto-ppb{:+}", self.beta_offset)
        }
    }

    fn order(&self, d: &Decision) -> Result<f64> {
        let series = d.series();
        let x = decision_features(
            series,
            d.set.skus,
            d.set.dcs,
            d.day,
            self.config.r,
            &self.spec,
        )
        .ok_or(Error::ShortWindow {
            needed: self.spec.warmup(self.config.r),
            available: d.day,
        })?;
        let tags = [d.set.instance as u64, d.product as u64, d.day as u64];
        let mut rng = substream(self.seed, &tags);
        let scenarios = sample_scenarios(&x, &self.models, self.scenarios, &mut rng, &self.config);
        let max_demand = series.demand[..d.day]
            .iter()
            .fold(0.0_f64, |a, &v| a.max(v));
        let pb = PbConfig {
            beta: self.beta(&x),
            q_max: ((self.config.k + self.config.lbar) as f64 * max_demand).max(f64::MIN_POSITIVE),
            tol: self.tol,
        };
        Ok(pb_order(d.state, &scenarios, self.config.r, &pb, &self.params)?.q)
    }
}

/// Shifts added to the PB weight when tuning PPB; contains zero exactly.
pub fn ppb_offsets() -> Vec<f64> {
    (0..=20).map(|i| (i as f64 - 10.0) / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpbOutcome {
    pub offset: f64,
    /// In-sample cost per admissible offset.
    pub costs: Vec<(f64, f64)>,
}

/// Pick the weight shift with the lowest in-sample cost, ties toward the
/// smallest shift. Shifts that make the weight non-positive at any decision
/// on the in-sample feature rows are skipped.
pub fn tune_ppb(
    base: &PtoPolicy,
    set: &ScenarioSet,
    samples: &[TrainingSample],
    offsets: &[f64],
) -> Result<(PpbOutcome, PtoPolicy)> {
    let min_beta = samples
        .iter()
        .map(|s| base.with_offset(0.0).beta(&s.x))
        .fold(f64::INFINITY, f64::min);
    let admissible: Vec<f64> = offsets
        .iter()
        .copied()
        .filter(|o| min_beta + o > 0.0)
        .collect();
    let costs = admissible
        .par_iter()
        .map(|&o| {
            let p = base.with_offset(o);
            in_sample_cost(&p, set, &base.config, &base.params, &base.spec).map(|c| (o, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = costs
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .ok_or(Error::Empty("no admissible balancing weight"))?;
    Ok((
        PpbOutcome {
            offset: best.0,
            costs,
        },
        base.with_offset(best.0),
    ))
}
