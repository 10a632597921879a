use serde::{Deserialize, Serialize};

use crate::accounting::{OrderLoss, OrderWindow};
use crate::config::CostParams;
use crate::dynamics::InventoryState;
use crate::error::{Error, Result};
use crate::poi::{exact_poi, smoothed_poi, PoiConfig};

/// Proportional-balancing weight on the overage side.
pub fn beta_coefficient(k: usize, mean_lead: f64, params: &CostParams) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    let kf = k as f64;
    (kf * params.h + params.theta) / (2.0 * (kf + mean_lead - 1.0) * params.h + params.theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbConfig {
    pub beta: f64,
    pub q_max: f64,
    pub tol: f64,
}

impl PbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("q_max", self.q_max),
            ("tol", self.tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PbStatus {
    Balanced,
    /// Overage already outweighs underage at zero.
    AtZero,
    /// No crossing below `q_max`.
    AtUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbOutcome {
    pub q: f64,
    /// `beta * E[H + Theta] - E[Pi]` at `q`.
    pub gap: f64,
    /// `beta * E[H + Theta] + E[Pi]` at `q`.
    pub scale: f64,
    pub status: PbStatus,
}

/// One sampled future: demands from the placement period on, this order's
/// lead time and the next order's lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbScenario {
    pub demands: Vec<f64>,
    pub lead: usize,
    pub next_lead: usize,
}

impl PbScenario {
    pub fn window(&self, r: usize) -> OrderWindow {
        OrderWindow::open(self.lead, Some((r + self.next_lead).max(self.lead)))
    }
}

fn balance(losses: &[OrderLoss], beta: f64, q: f64) -> (f64, f64) {
    let n = losses.len() as f64;
    let (mut over, mut under) = (0.0, 0.0);
    for l in losses {
        let b = l.evaluate(q);
        over += b.holding + b.outdating;
        under += b.backorder;
    }
    (beta * over / n - under / n, beta * over / n + under / n)
}

/// Root of `beta * E[H + Theta](q) = E[Pi](q)` on `[0, q_max]`.
///
/// Both sides are piecewise linear with kinks at the loss breakpoints, so a
/// binary search over breakpoints followed by interpolation on the bracketing
/// segment gives the crossing exactly.
pub fn pb_solve(losses: &[OrderLoss], config: &PbConfig) -> Result<PbOutcome> {
    config.validate()?;
    if losses.is_empty() {
        return Err(Error::Empty("no scenarios for balancing"));
    }
    let f = |q| balance(losses, config.beta, q);
    let (g0, s0) = f(0.0);
    if g0 >= 0.0 {
        return Ok(PbOutcome {
            q: 0.0,
            gap: g0,
            scale: s0,
            status: PbStatus::AtZero,
        });
    }
    let (gmax, smax) = f(config.q_max);
    if gmax < 0.0 {
        return Ok(PbOutcome {
            q: config.q_max,
            gap: gmax,
            scale: smax,
            status: PbStatus::AtUpperBound,
        });
    }
    let mut knots: Vec<f64> = losses
        .iter()
        .flat_map(OrderLoss::breakpoints)
        .filter(|&u| u > 0.0 && u < config.q_max)
        .collect();
    knots.push(0.0);
    knots.push(config.q_max);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    // Invariant: gap(knots[lo]) < 0 <= gap(knots[hi]).
    let (mut lo, mut hi) = (0, knots.len() - 1);
    let (mut glo, mut ghi) = (g0, gmax);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (g, _) = f(knots[mid]);
        if g < 0.0 {
            lo = mid;
            glo = g;
        } else {
            hi = mid;
            ghi = g;
        }
    }
    let (a, b) = (knots[lo], knots[hi]);
    let q = (a + (b - a) * (-glo) / (ghi - glo)).clamp(a, b);
    let (gap, scale) = f(q);
    Ok(PbOutcome {
        q,
        gap,
        scale,
        status: PbStatus::Balanced,
    })
}

pub fn pb_order(
    state: &InventoryState,
    scenarios: &[PbScenario],
    r: usize,
    config: &PbConfig,
    params: &CostParams,
) -> Result<PbOutcome> {
    let losses = scenarios
        .iter()
        .map(|s| OrderLoss::new(state, &s.demands, s.window(r), params))
        .collect::<Result<Vec<_>>>()?;
    pb_solve(&losses, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PoiMode {
    /// Round the lead time to the nearest admissible integer.
    Exact,
    Smoothed(PoiConfig),
}

/// Certainty-equivalent projected-inventory-level order
/// `(S - POI at arrival)^+`.
pub fn pil_ce_order(
    state: &InventoryState,
    demand_means: &[f64],
    lead_mean: f64,
    target: f64,
    mode: PoiMode,
) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::Numerical(format!("order-up-to target {target}")));
    }
    let poi = match mode {
        PoiMode::Exact => {
            let lead = lead_mean.round().clamp(1.0, state.lbar() as f64) as usize;
            exact_poi(state, demand_means, lead)?[0]
        }
        PoiMode::Smoothed(cfg) => smoothed_poi(state, demand_means, lead_mean, &cfg)?[0],
    };
    Ok((target - poi).max(0.0))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of an empty history"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = tau.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Ok(if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    })
}

/// Empirical demand quantile times the average historical lead time.
pub fn quantile_benchmark(history: &[f64], lead_history: &[f64], tau: f64) -> Result<f64> {
    if lead_history.is_empty() {
        return Err(Error::Empty("benchmark needs at least one past lead time"));
    }
    let mean_lead = lead_history.iter().sum::<f64>() / lead_history.len() as f64;
    Ok(quantile(history, tau)? * mean_lead)
}
