//! One benchmark instance end to end: generate data, pre-sample states,
//! train and select the learned policies, boost, and score out of sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CostParams, SystemConfig};
use crate::data::ScenarioSet;
use crate::datagen::{gen_instance, DgpKind, GenConfig};
use crate::e2e::{
    boost_gamma, in_sample_cost, presample_states, train_e2e, BoostConfig, BoostOutcome, E2ePolicy,
    EpochLog, NetKind, TrainConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, paired_t, CostSummary, EvalReport, TTest};
use crate::features::{build_samples, EpochGrid, FeatureSpec, TrainingSample};
use crate::policy::{BenchmarkOrderUpTo, QuantileBenchmark, Scaled};

/// Candidate regularisation weights; each coordinate is searched in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub demand: Vec<f64>,
    pub lead: Vec<f64>,
    pub poi1: Vec<f64>,
    pub poi2: Vec<f64>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            demand: vec![0.0, 0.1, 1.0, 2.5],
            lead: vec![0.0, 0.01, 0.1, 0.25],
            poi1: vec![0.0, 0.1, 1.0, 2.5],
            poi2: vec![0.0, 0.1, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub demand: f64,
    pub lead: f64,
    pub poi1: f64,
    pub poi2: f64,
}

impl Lambdas {
    pub fn of(cfg: &TrainConfig) -> Self {
        Self {
            demand: cfg.lambda_demand,
            lead: cfg.lambda_lead,
            poi1: cfg.lambda_poi1,
            poi2: cfg.lambda_poi2,
        }
    }

    pub fn apply(&self, cfg: &TrainConfig) -> TrainConfig {
        TrainConfig {
            lambda_demand: self.demand,
            lambda_lead: self.lead,
            lambda_poi1: self.poi1,
            lambda_poi2: self.poi2,
            ..*cfg
        }
    }

    fn with(mut self, coord: usize, v: f64) -> Self {
        match coord {
            0 => self.demand = v,
            1 => self.lead = v,
            2 => self.poi1 = v,
            _ => self.poi2 = v,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub lambdas: Lambdas,
    pub in_sample: f64,
}

#[derive(Debug, Clone)]
pub struct TunedModel {
    pub policy: E2ePolicy,
    pub lambdas: Lambdas,
    pub in_sample: f64,
    pub log: Vec<EpochLog>,
    pub trials: Vec<Trial>,
}

/// Everything the learners need from one generated instance.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub set: ScenarioSet,
    pub samples: Vec<TrainingSample>,
    pub system: SystemConfig,
    pub params: CostParams,
    pub spec: FeatureSpec,
}

impl Workbench {
    /// Pre-sample states under the order-up-to benchmark and cut training
    /// samples at every in-sample day.
    pub fn new(set: ScenarioSet, system: SystemConfig, params: CostParams) -> Result<Self> {
        system.validate()?;
        params.validate()?;
        let spec = FeatureSpec::new(&params);
        let pre = BenchmarkOrderUpTo::new(&spec, &system);
        let book = presample_states(&set, &pre, &system, &params, &spec)?;
        let samples = build_samples(&set, &system, &spec, EpochGrid::Daily, Some(&book))?;
        Ok(Self {
            set,
            samples,
            system,
            params,
            spec,
        })
    }

    fn fit(&self, kind: NetKind, cfg: &TrainConfig) -> Result<(E2ePolicy, f64, Vec<EpochLog>)> {
        let m = train_e2e(
            kind,
            &self.samples,
            &self.spec,
            &self.system,
            &self.params,
            cfg,
        )?;
        let label = match kind {
            NetKind::BlackBox => "e2e-bb",
            NetKind::Pil => "e2e-pil",
        };
        let policy = E2ePolicy::new(label, m.net);
        let cost = in_sample_cost(&policy, &self.set, &self.system, &self.params, &self.spec)?;
        Ok((policy, cost, m.log))
    }

    /// Train with `base`'s weights, then, if a grid is given, sweep each
    /// weight over its grid with the others held at their current best and
    /// keep the lowest in-sample cost (ties keep the earlier candidate).
    /// The POI weights are only searched for the PIL network.
    pub fn train(
        &self,
        kind: NetKind,
        base: &TrainConfig,
        grid: Option<&LambdaGrid>,
    ) -> Result<TunedModel> {
        let start = Lambdas::of(base);
        let (mut policy, mut best, mut log) = self.fit(kind, base)?;
        let mut lambdas = start;
        let mut trials = vec![Trial {
            lambdas,
            in_sample: best,
        }];
        let Some(grid) = grid else {
            return Ok(TunedModel {
                policy,
                lambdas,
                in_sample: best,
                log,
                trials,
            });
        };
        let coords: &[(usize, &Vec<f64>)] = match kind {
            NetKind::BlackBox => &[(0, &grid.demand), (1, &grid.lead)],
            NetKind::Pil => &[
                (0, &grid.demand),
                (1, &grid.lead),
                (2, &grid.poi1),
                (3, &grid.poi2),
            ],
        };
        for &(coord, values) in coords {
            let candidates: Vec<Lambdas> = values
                .iter()
                .map(|&v| lambdas.with(coord, v))
                .filter(|c| !trials.iter().any(|t| t.lambdas == *c))
                .collect();
            let fitted = candidates
                .par_iter()
                .map(|c| self.fit(kind, &c.apply(base)).map(|r| (*c, r)))
                .collect::<Result<Vec<_>>>()?;
            for (c, (p, cost, l)) in fitted {
                trials.push(Trial {
                    lambdas: c,
                    in_sample: cost,
                });
                if cost < best {
                    best = cost;
                    policy = p;
                    lambdas = c;
                    log = l;
                }
            }
        }
        Ok(TunedModel {
            policy,
            lambdas,
            in_sample: best,
            log,
            trials,
        })
    }

    pub fn boost(
        &self,
        pil: &E2ePolicy,
        boost: &BoostConfig,
    ) -> Result<(BoostOutcome, Scaled<E2ePolicy>)> {
        let (outcome, mut policy) = boost_gamma(
            pil,
            &self.set,
            boost,
            &self.system,
            &self.params,
            &self.spec,
        )?;
        policy.base.label = "e2e-bpil".into();
        Ok((outcome, policy))
    }
}

/// Settings for the learned-policy comparison on generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dgp: DgpKind,
    pub skus: usize,
    pub dcs: usize,
    pub seed: u64,
    pub system: SystemConfig,
    pub params: CostParams,
    pub train: TrainConfig,
    /// `None` trains once with the weights in `train`.
    pub tune: Option<LambdaGrid>,
    pub boost: BoostConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            dgp: DgpKind::Scr,
            skus: 10,
            dcs: 10,
            seed: 7,
            system: SystemConfig::default(),
            params: CostParams::default(),
            train: TrainConfig::default(),
            tune: Some(LambdaGrid::default()),
            boost: BoostConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn gen_config(&self, instance: usize) -> GenConfig {
        let mut g = GenConfig::new(self.dgp, self.skus, self.dcs, self.seed, instance);
        g.lbar = self.system.lbar;
        g
    }

    pub fn workbench(&self, instance: usize) -> Result<Workbench> {
        let (set, _) = gen_instance(&self.gen_config(instance))?;
        if set.horizon() < self.system.horizon() {
            return Err(Error::ShortWindow {
                needed: self.system.horizon(),
                available: set.horizon(),
            });
        }
        Workbench::new(set, self.system, self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: usize,
    pub benchmark: EvalReport,
    pub bb: EvalReport,
    pub pil: EvalReport,
    pub bpil: EvalReport,
    pub bb_lambdas: Lambdas,
    pub pil_lambdas: Lambdas,
    pub bb_in_sample: f64,
    pub pil_in_sample: f64,
    pub boost: BoostOutcome,
}

impl InstanceResult {
    pub fn cost(&self, policy: &str) -> Option<&CostSummary> {
        match policy {
            "benchmark" => Some(&self.benchmark.summary),
            "e2e-bb" => Some(&self.bb.summary),
            "e2e-pil" => Some(&self.pil.summary),
            "e2e-bpil" => Some(&self.bpil.summary),
            _ => None,
        }
    }
}

/// Trained policies of one instance, kept for probing after evaluation.
pub struct InstanceModels {
    pub bench: Workbench,
    pub bb: TunedModel,
    pub pil: TunedModel,
    pub bpil: Scaled<E2ePolicy>,
}

pub fn run_instance(
    cfg: &BenchmarkConfig,
    instance: usize,
) -> Result<(InstanceResult, InstanceModels)> {
    let bench = cfg.workbench(instance)?;
    let grid = cfg.tune.as_ref();
    let bb = bench.train(NetKind::BlackBox, &cfg.train, grid)?;
    let pil = bench.train(NetKind::Pil, &cfg.train, grid)?;
    let (boost, bpil) = bench.boost(&pil.policy, &cfg.boost)?;
    let (set, sys, params) = (&bench.set, &bench.system, &bench.params);
    let quantile = QuantileBenchmark::new(&bench.spec, sys);
    let result = InstanceResult {
        instance,
        benchmark: evaluate_policy(&quantile, set, sys, params)?,
        bb: evaluate_policy(&bb.policy, set, sys, params)?,
        pil: evaluate_policy(&pil.policy, set, sys, params)?,
        bpil: evaluate_policy(&bpil, set, sys, params)?,
        bb_lambdas: bb.lambdas,
        pil_lambdas: pil.lambdas,
        bb_in_sample: bb.in_sample,
        pil_in_sample: pil.in_sample,
        boost,
    };
    Ok((
        result,
        InstanceModels {
            bench,
            bb,
            pil,
            bpil,
        },
    ))
}

/// Paired one-sided tests of `H0: C(first) <= C(second)` across instances.
pub fn pairwise_tests(
    results: &[InstanceResult],
    pairs: &[(&str, &str)],
) -> Result<Vec<(String, TTest)>> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let col = |p: &str| {
                results
                    .iter()
                    .map(|r| r.cost(p).map(|c| c.total))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::Config(format!("unknown policy {p}")))
            };
            Ok((format!("{a} vs {b}"), paired_t(&col(a)?, &col(b)?)?))
        })
        .collect()
}
