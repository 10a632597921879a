use perishlab_autodiff::{AdamConfig, Graph, OptimState, Tape, Var};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{E2eNet, HiddenSizes, NetArch, NetKind};
use crate::accounting::{OrderLoss, OrderWindow};
use crate::config::{CostParams, SystemConfig};
use crate::dynamics::InventoryState;
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Standardizer, TrainingSample};
use crate::poi::{exact_poi, PoiConfig};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_demand: f64,
    pub lambda_lead: f64,
    pub lambda_poi1: f64,
    pub lambda_poi2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub hidden: HiddenSizes,
    pub poi: PoiConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_demand: 0.1,
            lambda_lead: 0.01,
            lambda_poi1: 0.1,
            lambda_poi2: 0.1,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            adam: AdamConfig {
                learning_rate: 1e-3,
                weight_decay: 1e-5,
                decay_rate: 0.6,
                decay_step: 5,
                ..AdamConfig::default()
            },
            hidden: HiddenSizes::default(),
            poi: PoiConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [
            self.lambda_demand,
            self.lambda_lead,
            self.lambda_poi1,
            self.lambda_poi2,
        ];
        if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "regularisation weights must be >= 0, got {l:?}"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.poi.validate()
    }
}

/// A training sample converted to network units.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub loss: OrderLoss,
    pub demand: Vec<f64>,
    pub lead: [f64; 2],
    /// No-order projected on-hand levels over the order's lifetime.
    pub poi: Vec<f64>,
}

pub fn prepare(
    s: &TrainingSample,
    inputs: &Standardizer,
    scale: f64,
    config: &SystemConfig,
    params: &CostParams,
) -> Result<Prepared> {
    let z: Vec<f64> = s.state.levels().iter().map(|v| v / scale).collect();
    let state = InventoryState::new(config.k, config.lbar, z.clone())?;
    let demand: Vec<f64> = s.demands.iter().map(|d| d / scale).collect();
    let [l0, l1] = s.leads;
    let window = OrderWindow::open(l0, Some((config.r + l1).max(l0)));
    Ok(Prepared {
        x: inputs.apply(&s.x),
        loss: OrderLoss::new(&state, &demand, window, params)?,
        poi: exact_poi(&state, &demand, l0)?,
        z,
        demand,
        lead: [l0 as f64, l1 as f64],
    })
}

/// Loss components of one sample; `total` includes the weights.
#[derive(Debug, Clone, Copy)]
pub struct LossParts<V> {
    pub total: V,
    pub marginal: V,
    pub demand: V,
    pub lead: V,
    pub poi_first: Option<V>,
    pub poi_rest: Option<V>,
}

fn mse<G: Graph>(g: &mut G, pred: &[G::V], target: &[f64]) -> G::V {
    let sq: Vec<G::V> = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = g.shift(p, -t);
            g.square(d)
        })
        .collect();
    let s = g.sum(&sq);
    g.scale(s, 1.0 / target.len() as f64)
}

/// Marginal-cost loss plus prediction regularisers for one sample.
pub fn sample_loss<G: Graph>(
    net: &E2eNet,
    g: &mut G,
    params: &[G::V],
    p: &Prepared,
    cfg: &TrainConfig,
) -> Result<LossParts<G::V>> {
    let x: Vec<G::V> = p.x.iter().map(|&v| g.constant(v)).collect();
    let out = net.forward(g, params, &x, &p.z)?;
    let marginal = p.loss.loss_graph(g, out.q);
    let demand = mse(g, &out.demand, &p.demand);
    let lead = mse(g, &out.lead, &p.lead);
    let mut terms = vec![
        marginal,
        g.scale(demand, cfg.lambda_demand),
        g.scale(lead, cfg.lambda_lead),
    ];
    let (mut poi_first, mut poi_rest) = (None, None);
    if let Some(poi) = &out.poi {
        let d = g.shift(poi[0], -p.poi[0]);
        let first = g.square(d);
        let rest: Vec<G::V> = poi[1..]
            .iter()
            .zip(&p.poi[1..])
            .map(|(&a, &b)| {
                let d = g.shift(a, -b);
                g.square(d)
            })
            .collect();
        let rest = g.sum(&rest);
        terms.push(g.scale(first, cfg.lambda_poi1));
        terms.push(g.scale(rest, cfg.lambda_poi2));
        poi_first = Some(first);
        poi_rest = Some(rest);
    }
    let total = g.sum(&terms);
    Ok(LossParts {
        total,
        marginal,
        demand,
        lead,
        poi_first,
        poi_rest,
    })
}

/// Mean of each loss component over one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub marginal: f64,
    pub demand_mse: f64,
    pub lead_mse: f64,
    pub poi_first: f64,
    pub poi_rest: f64,
    pub learning_rate: f64,
}

/// Number of independent pieces a batch is split into for the gradient.
/// Fixed so that results do not depend on the thread count.
const BATCH_SHARDS: usize = 4;

/// Mean loss and gradient over `batch`.
pub fn batch_gradient(
    net: &E2eNet,
    params: &[f64],
    batch: &[&Prepared],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, EpochLog)> {
    let n = batch.len() as f64;
    let shard = batch.len().div_ceil(BATCH_SHARDS).max(1);
    let parts = batch
        .par_chunks(shard)
        .map(|chunk| -> Result<(Vec<f64>, EpochLog)> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tape.vars(params);
            let mut totals = Vec::with_capacity(chunk.len());
            let mut log = EpochLog::default();
            for p in chunk {
                let parts = sample_loss(net, &mut tape, &vars, p, cfg)?;
                let v = |x: Var| tape.value(x);
                log.loss += v(parts.total) / n;
                log.marginal += v(parts.marginal) / n;
                log.demand_mse += v(parts.demand) / n;
                log.lead_mse += v(parts.lead) / n;
                log.poi_first += parts.poi_first.map_or(0.0, v) / n;
                log.poi_rest += parts.poi_rest.map_or(0.0, v) / n;
                totals.push(parts.total);
            }
            let sum = tape.sum(&totals);
            let mean = tape.scale(sum, 1.0 / n);
            let grads = tape.gradient(mean)?;
            Ok((grads.wrt_all(&vars), log))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; params.len()];
    let mut log = EpochLog::default();
    for (g, l) in parts {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        log.loss += l.loss;
        log.marginal += l.marginal;
        log.demand_mse += l.demand_mse;
        log.lead_mse += l.lead_mse;
        log.poi_first += l.poi_first;
        log.poi_rest += l.poi_rest;
    }
    Ok((grad, log))
}

fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub net: E2eNet,
    pub log: Vec<EpochLog>,
}

/// Network, standardiser and prepared samples, ready for optimisation.
pub struct TrainingSetup {
    pub net: E2eNet,
    pub prepared: Vec<Prepared>,
}

pub fn setup_training(
    kind: NetKind,
    samples: &[TrainingSample],
    spec: &FeatureSpec,
    config: &SystemConfig,
    params: &CostParams,
    cfg: &TrainConfig,
) -> Result<TrainingSetup> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("no training samples"));
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let inputs = Standardizer::fit(&rows)?;
    let total: f64 = samples.iter().map(|s| s.demands.iter().sum::<f64>()).sum();
    let count: usize = samples.iter().map(|s| s.demands.len()).sum();
    let mean_demand = total / count as f64;
    let scale = if mean_demand > 1e-9 { mean_demand } else { 1.0 };
    let arch = NetArch {
        kind,
        system: *config,
        features: *spec,
        hidden: cfg.hidden,
        poi: cfg.poi,
        inputs: inputs.clone(),
        demand_scale: scale,
    };
    let prepared = samples
        .iter()
        .map(|s| prepare(s, &inputs, scale, config, params))
        .collect::<Result<Vec<_>>>()?;
    let m = prepared.len() as f64;
    let lead_bias = [
        prepared.iter().map(|p| p.lead[0]).sum::<f64>() / m,
        prepared.iter().map(|p| p.lead[1]).sum::<f64>() / m,
    ];
    let demand_bias = mean_demand / scale;
    let cover = config.r as f64 * demand_bias;
    let decision_bias = match kind {
        NetKind::BlackBox => softplus_inverse(cover.max(1e-3)),
        NetKind::Pil => prepared.iter().map(|p| p.poi[0]).sum::<f64>() / m + cover,
    };
    let mut rng = substream(cfg.seed, &[0]);
    let net = E2eNet::init(arch, &mut rng, demand_bias, lead_bias, decision_bias);
    Ok(TrainingSetup { net, prepared })
}

/// Adam on shuffled mini-batches; deterministic given the seed.
pub fn fit(setup: TrainingSetup, cfg: &TrainConfig) -> Result<TrainedModel> {
    let TrainingSetup { mut net, prepared } = setup;
    let mut params = net.params.clone();
    let mut opt = OptimState::new(params.len(), cfg.adam);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, &[1, epoch as u64]));
        let lr = opt.learning_rate();
        let mut entry = EpochLog {
            epoch,
            learning_rate: lr,
            ..EpochLog::default()
        };
        let batches = order.len().div_ceil(cfg.batch_size) as f64;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &prepared[i]).collect();
            let (grad, b) = batch_gradient(&net, &params, &batch, cfg)?;
            if !b.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    loss: b.loss,
                });
            }
            opt.step(&mut params, &grad)?;
            entry.loss += b.loss / batches;
            entry.marginal += b.marginal / batches;
            entry.demand_mse += b.demand_mse / batches;
            entry.lead_mse += b.lead_mse / batches;
            entry.poi_first += b.poi_first / batches;
            entry.poi_rest += b.poi_rest / batches;
        }
        opt.end_epoch();
        log.push(entry);
    }
    net.params = params;
    Ok(TrainedModel { net, log })
}

pub fn train_e2e(
    kind: NetKind,
    samples: &[TrainingSample],
    spec: &FeatureSpec,
    config: &SystemConfig,
    params: &CostParams,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    fit(
        setup_training(kind, samples, spec, config, params, cfg)?,
        cfg,
    )
}
