use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{CostParams, SystemConfig};
use crate::data::ScenarioSet;
use crate::dynamics::{InventoryState, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{simulate, PathWindow, Policy};

/// Per-period averages over the evaluated periods of one or more paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub total: f64,
    pub holding: f64,
    pub backorder: f64,
    pub outdating: f64,
    pub stockout_rate: f64,
    pub outdating_rate: f64,
}

impl CostSummary {
    fn mean(items: &[CostSummary]) -> CostSummary {
        let n = items.len() as f64;
        let mut m = CostSummary::default();
        for s in items {
            m.total += s.total / n;
            m.holding += s.holding / n;
            m.backorder += s.backorder / n;
            m.outdating += s.outdating / n;
            m.stockout_rate += s.stockout_rate / n;
            m.outdating_rate += s.outdating_rate / n;
        }
        m
    }
}

/// Averages over periods from the first arrival to the end of the path.
pub fn summarize_path(traj: &Trajectory, path: usize) -> Result<CostSummary> {
    let from = traj
        .first_arrival()
        .ok_or(Error::NoEvaluablePeriods { path })?;
    if from >= traj.periods() {
        return Err(Error::NoEvaluablePeriods { path });
    }
    let costs = &traj.costs[from..];
    let n = costs.len() as f64;
    let mut s = CostSummary::default();
    for c in costs {
        s.holding += c.holding / n;
        s.backorder += c.backorder / n;
        s.outdating += c.outdating / n;
        s.stockout_rate += f64::from(u8::from(c.backorder > 0.0)) / n;
        s.outdating_rate += f64::from(u8::from(c.outdating > 0.0)) / n;
    }
    s.total = s.holding + s.backorder + s.outdating;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub instance: usize,
    pub summary: CostSummary,
    /// Average cost per period of each product.
    pub per_product: Vec<f64>,
}

/// Average cost of one product over the given shifted paths.
pub fn evaluate_product<P: Policy + ?Sized>(
    policy: &P,
    set: &ScenarioSet,
    product: usize,
    paths: &[PathWindow],
    config: &SystemConfig,
    params: &CostParams,
) -> Result<CostSummary> {
    let per_path = paths
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let z0 = InventoryState::zeros(config.k, config.lbar);
            summarize_path(&simulate(policy, set, product, *w, params, z0)?, i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostSummary::mean(&per_path))
}

/// Evaluate on every product in parallel and average.
pub fn evaluate_on_paths<P: Policy + ?Sized>(
    policy: &P,
    set: &ScenarioSet,
    paths: &[PathWindow],
    config: &SystemConfig,
    params: &CostParams,
) -> Result<EvalReport> {
    let per = (0..set.products.len())
        .into_par_iter()
        .map(|p| evaluate_product(policy, set, p, paths, config, params))
        .collect::<Result<Vec<_>>>()?;
    if per.is_empty() {
        return Err(Error::Empty("scenario set has no products"));
    }
    Ok(EvalReport {
        policy: policy.name(),
        instance: set.instance,
        summary: CostSummary::mean(&per),
        per_product: per.iter().map(|s| s.total).collect(),
    })
}

/// Out-of-sample evaluation over the `R` shifted ordering paths.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    set: &ScenarioSet,
    config: &SystemConfig,
    params: &CostParams,
) -> Result<EvalReport> {
    evaluate_on_paths(
        policy,
        set,
        &PathWindow::out_of_sample(config),
        config,
        params,
    )
}

pub fn relative_gap(cost: f64, reference: f64) -> f64 {
    (cost - reference) / reference
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// One-sided p-value against `mean(a) <= mean(b)`.
    pub p: f64,
    pub df: f64,
    /// Both samples have zero variance.
    pub degenerate: bool,
}

/// Welch's unequal-variance two-sample t-test.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Empty(
            "t-test needs at least two observations per sample",
        ));
    }
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let (t, p) = match ma.partial_cmp(&mb) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(TTest {
            t,
            p,
            df: na + nb - 2.0,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TTest {
        t,
        p: 1.0 - dist.cdf(t),
        df,
        degenerate: false,
    })
}

/// One-sided paired t-test of `H0: mean(a - b) <= 0`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if v == 0.0 {
        let (t, p) = match m.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(TTest {
            t,
            p,
            df,
            degenerate: true,
        });
    }
    let t = m / (v / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(TTest {
        t,
        p: 1.0 - dist.cdf(t),
        df,
        degenerate: false,
    })
}

impl TTest {
    /// `t(p)` with one to three stars for p below 0.05, 0.01, 0.001.
    pub fn cell(&self) -> String {
        let stars = match self.p {
            p if p < 0.001 => "***",
            p if p < 0.01 => "**",
            p if p < 0.05 => "*",
            _ => "",
        };
        format!("{:.3}({:.3}){stars}", self.t, self.p)
    }
}
