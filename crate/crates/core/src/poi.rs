//! Projected on-hand inventory at an order's arrival when neither this nor
//! any later order is placed.

use perishlab_autodiff::{Graph, Plain};
use serde::{Deserialize, Serialize};

use crate::accounting::poi_candidates;
use crate::dynamics::InventoryState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoiConfig {
    /// Gaussian kernel bandwidth.
    pub bandwidth: f64,
}

impl Default for PoiConfig {
    fn default() -> Self {
        Self { bandwidth: 0.3 }
    }
}

impl PoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }
}

/// Projected on-hand levels at periods `t_m + lead .. t_m + lead + K - 1`.
pub fn exact_poi(state: &InventoryState, demands: &[f64], lead: usize) -> Result<Vec<f64>> {
    let k = state.k();
    let lbar = state.lbar();
    if lead == 0 || lead > lbar {
        return Err(Error::LeadTime { lead, lbar });
    }
    // The candidate at offset j only uses demands before j.
    let needed = lead + k - 1;
    if demands.len() < needed {
        return Err(Error::ShortWindow {
            needed,
            available: demands.len(),
        });
    }
    let mut d = demands[..needed].to_vec();
    d.push(0.0);
    let c = poi_candidates(&mut Plain, state.levels(), &d);
    Ok(c[lead..lead + k].to_vec())
}

/// Kernel-weighted average of `candidates` around offsets `lead + s`,
/// `s = 0..k`. `lead` is clamped to `[1, lbar]` first.
pub fn smooth_candidates<G: Graph>(
    g: &mut G,
    candidates: &[G::V],
    lead: G::V,
    k: usize,
    lbar: usize,
    bandwidth: f64,
) -> Result<Vec<G::V>> {
    let lead = g.clamp(lead, 1.0, lbar as f64);
    let l = g.value(lead);
    let mut out = Vec::with_capacity(k);
    for s in 0..k {
        let dist: Vec<G::V> = (0..candidates.len())
            .map(|i| g.shift(lead, s as f64 - i as f64))
            .collect();
        // Subtracting the smallest squared distance keeps the largest weight at one.
        let nearest = (0..candidates.len())
            .map(|i| (l + s as f64 - i as f64).powi(2))
            .fold(f64::INFINITY, f64::min);
        let weights: Vec<G::V> = dist
            .iter()
            .map(|&d| {
                let sq = g.square(d);
                let e = g.scale(sq, -1.0 / bandwidth);
                let e = g.shift(e, nearest / bandwidth);
                g.exp(e)
            })
            .collect();
        let total = g.sum(&weights);
        let tv = g.value(total);
        if !(tv.is_finite() && tv > 0.0) {
            return Err(Error::KernelUnderflow(l));
        }
        let num = g.dot(&weights, candidates);
        out.push(g.div(num, total));
    }
    Ok(out)
}

/// Differentiable projected on-hand levels from predicted demands over
/// `t_m .. t_m + K + Lbar - 1` and a real-valued lead-time prediction.
pub fn smoothed_poi_graph<G: Graph>(
    g: &mut G,
    z: &[f64],
    k: usize,
    demand_preds: &[G::V],
    lead_pred: G::V,
    config: &PoiConfig,
) -> Result<Vec<G::V>> {
    let lbar = z.len() + 1 - k;
    if demand_preds.len() < k + lbar {
        return Err(Error::ShortWindow {
            needed: k + lbar,
            available: demand_preds.len(),
        });
    }
    let c = poi_candidates(g, z, &demand_preds[..k + lbar]);
    smooth_candidates(g, &c, lead_pred, k, lbar, config.bandwidth)
}

pub fn smoothed_poi(
    state: &InventoryState,
    demand_preds: &[f64],
    lead_pred: f64,
    config: &PoiConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if !lead_pred.is_finite() {
        return Err(Error::KernelUnderflow(lead_pred));
    }
    smoothed_poi_graph(
        &mut Plain,
        state.levels(),
        state.k(),
        demand_preds,
        lead_pred,
        config,
    )
}

/// Normalised kernel weights over offsets `0..n` centred at `lead + s`.
pub fn kernel_weights(lead: f64, s: usize, n: usize, bandwidth: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n)
        .map(|i| -(lead + s as f64 - i as f64).powi(2) / bandwidth)
        .collect();
    let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}
