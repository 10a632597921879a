//! End-to-end policies trained on the per-order marginal-cost loss.

mod net;
mod train;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use net::{E2eNet, HiddenSizes, NetArch, NetKind, NetOutput};
pub use train::{
    batch_gradient, fit, prepare, sample_loss, setup_training, train_e2e, EpochLog, LossParts,
    Prepared, TrainConfig, TrainedModel, TrainingSetup,
};

use crate::config::{CostParams, SystemConfig};
use crate::data::ScenarioSet;
use crate::dynamics::InventoryState;
use crate::error::{Error, Result};
use crate::evaluation::evaluate_on_paths;
use crate::features::{decision_features, FeatureSpec, StateBook};
use crate::policy::{simulate, Decision, PathWindow, Policy, Scaled};

/// Record the state at every in-sample ordering epoch while `policy` runs
/// on each of the `R` shifted paths.
pub fn presample_states<P: Policy + ?Sized>(
    set: &ScenarioSet,
    policy: &P,
    config: &SystemConfig,
    params: &CostParams,
    spec: &FeatureSpec,
) -> Result<StateBook> {
    let paths = PathWindow::in_sample(config, spec);
    (0..set.products.len())
        .into_par_iter()
        .map(|p| {
            let mut book = HashMap::new();
            for w in &paths {
                let z0 = InventoryState::zeros(config.k, config.lbar);
                let traj = simulate(policy, set, p, *w, params, z0)?;
                for o in &traj.orders {
                    book.insert(w.start + o.placed, traj.states[o.placed].clone());
                }
            }
            Ok(book)
        })
        .collect()
}

/// A trained network used as an ordering policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2ePolicy {
    pub label: String,
    pub net: E2eNet,
}

impl E2ePolicy {
    pub fn new(label: impl Into<String>, net: E2eNet) -> Self {
        Self {
            label: label.into(),
            net,
        }
    }
}

impl Policy for E2ePolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn order(&self, d: &Decision) -> Result<f64> {
        let a = &self.net.arch;
        let x = decision_features(
            d.series(),
            d.set.skus,
            d.set.dcs,
            d.day,
            a.system.r,
            &a.features,
        )
        .ok_or(Error::OutOfRange {
            index: d.day,
            lo: a.features.warmup(a.system.r),
            hi: d.series().len() - 1,
        })?;
        self.net.decide(&x, d.state.levels())
    }
}

/// Average in-sample cost per period over the shifted paths.
pub fn in_sample_cost<P: Policy + ?Sized>(
    policy: &P,
    set: &ScenarioSet,
    config: &SystemConfig,
    params: &CostParams,
    spec: &FeatureSpec,
) -> Result<f64> {
    let paths = PathWindow::in_sample(config, spec);
    Ok(evaluate_on_paths(policy, set, &paths, config, params)?
        .summary
        .total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub gamma_grid: Vec<f64>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            gamma_grid: (0..=12).map(|i| f64::from(80 + 5 * i) / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostOutcome {
    pub gamma: f64,
    /// In-sample cost for every grid value, in grid order.
    pub costs: Vec<(f64, f64)>,
}

impl BoostOutcome {
    pub fn best_cost(&self) -> f64 {
        self.costs
            .iter()
            .find(|(g, _)| *g == self.gamma)
            .map_or(f64::NAN, |c| c.1)
    }
}

/// Pick the scaling of `base` with the lowest in-sample simulated cost;
/// ties go to the smallest factor.
pub fn boost_gamma<P: Policy + Clone>(
    base: &P,
    set: &ScenarioSet,
    boost: &BoostConfig,
    config: &SystemConfig,
    params: &CostParams,
    spec: &FeatureSpec,
) -> Result<(BoostOutcome, Scaled<P>)> {
    if boost.gamma_grid.is_empty()
        || boost
            .gamma_grid
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
    {
        return Err(Error::Config(format!(
            "invalid boosting grid {:?}",
            boost.gamma_grid
        )));
    }
    let mut grid = boost.gamma_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let costs = grid
        .iter()
        .map(|&gamma| {
            let p = Scaled {
                base: base.clone(),
                gamma,
            };
            Ok((gamma, in_sample_cost(&p, set, config, params, spec)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (gamma, _) = costs
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, c| {
            if c.1 < best.1 {
                c
            } else {
                best
            }
        });
    Ok((
        BoostOutcome { gamma, costs },
        Scaled {
            base: base.clone(),
            gamma,
        },
    ))
}
