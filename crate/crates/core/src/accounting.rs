//! Reassigning trajectory costs to the orders that cause them.
//!
//! For an order placed at `t_m` with state `z`, all quantities are indexed by
//! the offset `j = s - t_m` from the placement period. `B_j` is the quantity
//! of pre-existing stock that has expired by the end of `t_m + j` and `D~_j`
//! is the demand left unmet through `t_m + j` by that stock alone.

use perishlab_autodiff::{Graph, Plain};
use serde::{Deserialize, Serialize};

use crate::config::CostParams;
use crate::dynamics::{InventoryState, Trajectory};
use crate::error::{Error, Result};

/// `B_j` for `j = 0..len` from a state given as raw slot levels.
pub fn outdate_profile<G: Graph>(g: &mut G, z: &[f64], demands: &[G::V], len: usize) -> Vec<G::V> {
    let mut out = Vec::with_capacity(len);
    let mut stock = 0.0;
    let mut cum_d: Option<G::V> = None;
    let mut prev: Option<G::V> = None;
    for (j, &d) in demands.iter().enumerate().take(len) {
        stock += z.get(j).copied().unwrap_or(0.0);
        let cd = match cum_d {
            Some(c) => g.add(c, d),
            None => d,
        };
        cum_d = Some(cd);
        let left = g.neg(cd);
        let left = g.shift(left, stock);
        let b = match prev {
            Some(p) => g.max(left, p),
            None => g.relu(left),
        };
        prev = Some(b);
        out.push(b);
    }
    out
}

/// Candidate projected on-hand levels `D_j - D~_j = sum(z) - D_[0,j-1] - B_{j-1}`
/// for `j = 0..demands.len()`.
pub fn poi_candidates<G: Graph>(g: &mut G, z: &[f64], demands: &[G::V]) -> Vec<G::V> {
    let total: f64 = z.iter().sum();
    let n = demands.len();
    let b = outdate_profile(g, z, demands, n.saturating_sub(1));
    let mut out = Vec::with_capacity(n);
    let mut cum_d: Option<G::V> = None;
    for j in 0..n {
        let c = match cum_d {
            None => g.constant(total),
            Some(cd) => {
                let used = g.add(cd, b[j - 1]);
                let used = g.neg(used);
                g.shift(used, total)
            }
        };
        out.push(c);
        cum_d = Some(match cum_d {
            Some(cd) => g.add(cd, demands[j]),
            None => demands[j],
        });
    }
    out
}

/// Unmet demand `D~_j` for `j = 0..demands.len()`.
pub fn unmet_profile<G: Graph>(g: &mut G, z: &[f64], demands: &[G::V]) -> Vec<G::V> {
    let cands = poi_candidates(g, z, demands);
    cands
        .iter()
        .zip(demands)
        .map(|(&c, &d)| g.sub(d, c))
        .collect()
}

/// `B_[t_m, t_m + s]` for the given state and demands starting at `t_m`.
pub fn outdate_quantity(state: &InventoryState, demands: &[f64], s: usize) -> Result<f64> {
    let hi = state.levels().len() - 1;
    if s > hi {
        return Err(Error::OutOfRange {
            index: s,
            lo: 0,
            hi,
        });
    }
    if demands.len() <= s {
        return Err(Error::ShortWindow {
            needed: s + 1,
            available: demands.len(),
        });
    }
    Ok(outdate_profile(&mut Plain, state.levels(), demands, s + 1)[s])
}

/// `D~_{t_m + s}`; negative values mean leftover stock.
pub fn unmet_demand(state: &InventoryState, demands: &[f64], s: usize) -> Result<f64> {
    let hi = state.levels().len();
    if s > hi {
        return Err(Error::OutOfRange {
            index: s,
            lo: 0,
            hi,
        });
    }
    if demands.len() <= s {
        return Err(Error::ShortWindow {
            needed: s + 1,
            available: demands.len(),
        });
    }
    Ok(unmet_profile(&mut Plain, state.levels(), &demands[..=s])[s])
}

/// Timing of one order relative to its placement period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderWindow {
    pub lead: usize,
    /// Arrival offset of the next order; `None` if there is none.
    pub next_arrival: Option<usize>,
    /// Periods remaining in the horizon, counting the placement period.
    pub horizon: Option<usize>,
}

impl OrderWindow {
    pub fn open(lead: usize, next_arrival: Option<usize>) -> Self {
        Self {
            lead,
            next_arrival,
            horizon: None,
        }
    }

    fn last_period(&self) -> Option<usize> {
        self.horizon.map(|h| h.saturating_sub(1))
    }

    /// Inclusive offset range of the holding window, if nonempty.
    fn holding_range(&self, k: usize) -> Option<(usize, usize)> {
        let mut end = self.lead + k - 1;
        if let Some(last) = self.last_period() {
            if self.horizon == Some(0) || last < self.lead {
                return None;
            }
            end = end.min(last);
        }
        Some((self.lead, end))
    }

    fn backorder_range(&self, k: usize) -> Option<(usize, usize)> {
        let (lo, mut hi) = self.holding_range(k)?;
        if let Some(next) = self.next_arrival {
            if next <= lo {
                return None;
            }
            hi = hi.min(next - 1);
        }
        Some((lo, hi))
    }

    fn outdates_in_horizon(&self, k: usize) -> bool {
        let end = self.lead + k - 1;
        self.last_period()
            .is_none_or(|last| self.horizon != Some(0) && end <= last)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginalBreakdown {
    pub holding: f64,
    pub outdating: f64,
    pub backorder: f64,
    /// Backorders after the order has expired but before the next arrival.
    pub residual_backorder: f64,
}

impl MarginalBreakdown {
    /// The per-order training loss `H + Theta + Pi`.
    pub fn loss(&self) -> f64 {
        self.holding + self.outdating + self.backorder
    }
}

/// The marginal cost of one order as a function of its quantity.
///
/// Precomputes the thresholds so the piecewise-linear loss can be evaluated
/// for many candidate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderLoss {
    params: CostParams,
    holding_levels: Vec<f64>,
    outdate_level: Option<f64>,
    backorder_levels: Vec<f64>,
    residual_base: Option<f64>,
    residual_demand: Vec<f64>,
}

impl OrderLoss {
    /// `demands[j]` is the demand in period `t_m + j`; it must reach the end
    /// of the order's lifetime or the horizon, whichever is earlier. The
    /// residual backorder term only covers periods present in `demands`.
    pub fn new(
        state: &InventoryState,
        demands: &[f64],
        window: OrderWindow,
        params: &CostParams,
    ) -> Result<Self> {
        let k = state.k();
        let lbar = state.lbar();
        if window.lead == 0 || window.lead > lbar {
            return Err(Error::LeadTime {
                lead: window.lead,
                lbar,
            });
        }
        let range = window.holding_range(k);
        let needed = range.map_or(0, |(_, hi)| hi + 1);
        if demands.len() < needed {
            return Err(Error::ShortWindow {
                needed,
                available: demands.len(),
            });
        }
        let unmet = unmet_profile(&mut Plain, state.levels(), &demands[..needed]);
        let holding_levels = range
            .map(|(lo, hi)| unmet[lo..=hi].iter().map(|d| d.max(0.0)).collect())
            .unwrap_or_default();
        let end = window.lead + k - 1;
        let outdate_level = if window.outdates_in_horizon(k) {
            Some(unmet[end].max(0.0))
        } else {
            None
        };
        let backorder_levels = window
            .backorder_range(k)
            .map(|(lo, hi)| unmet[lo..=hi].to_vec())
            .unwrap_or_default();

        let mut residual_base = None;
        let mut residual_demand = Vec::new();
        if window.outdates_in_horizon(k) {
            let mut stop = demands.len();
            if let Some(next) = window.next_arrival {
                stop = stop.min(next);
            }
            if let Some(h) = window.horizon {
                stop = stop.min(h);
            }
            if stop > end + 1 {
                residual_base = Some(unmet[end]);
                let mut cum = 0.0;
                for &d in &demands[end + 1..stop] {
                    cum += d;
                    residual_demand.push(cum);
                }
            }
        }
        Ok(Self {
            params: *params,
            holding_levels,
            outdate_level,
            backorder_levels,
            residual_base,
            residual_demand,
        })
    }

    pub fn evaluate(&self, q: f64) -> MarginalBreakdown {
        let p = &self.params;
        let holding = p.h
            * self
                .holding_levels
                .iter()
                .map(|u| (q - u).max(0.0))
                .sum::<f64>();
        let outdating = self
            .outdate_level
            .map_or(0.0, |u| p.theta * (q - u).max(0.0));
        let backorder = p.b
            * self
                .backorder_levels
                .iter()
                .map(|w| (w - q).max(0.0))
                .sum::<f64>();
        let residual_backorder = self.residual_base.map_or(0.0, |base| {
            let carried = (base - q).max(0.0);
            p.b * self
                .residual_demand
                .iter()
                .map(|c| carried + c)
                .sum::<f64>()
        });
        MarginalBreakdown {
            holding,
            outdating,
            backorder,
            residual_backorder,
        }
    }

    pub fn loss(&self, q: f64) -> f64 {
        self.evaluate(q).loss()
    }

    /// `H + Theta`, nondecreasing in `q`.
    pub fn overage(&self, q: f64) -> f64 {
        let b = self.evaluate(q);
        b.holding + b.outdating
    }

    /// `Pi`, nonincreasing in `q`.
    pub fn underage(&self, q: f64) -> f64 {
        self.evaluate(q).backorder
    }

    /// Derivative of the loss from below (zero slope taken at every kink).
    pub fn subgradient(&self, q: f64) -> f64 {
        let p = &self.params;
        let above = |u: f64| if q > u { 1.0 } else { 0.0 };
        let mut g = p.h * self.holding_levels.iter().map(|&u| above(u)).sum::<f64>();
        if let Some(u) = self.outdate_level {
            g += p.theta * above(u);
        }
        g - p.b * self.backorder_levels.iter().filter(|&&w| w > q).count() as f64
    }

    /// The loss recorded on a computation graph.
    pub fn loss_graph<G: Graph>(&self, g: &mut G, q: G::V) -> G::V {
        let p = &self.params;
        let mut terms =
            Vec::with_capacity(self.holding_levels.len() + self.backorder_levels.len() + 1);
        for &u in &self.holding_levels {
            let d = g.shift(q, -u);
            let r = g.relu(d);
            terms.push(g.scale(r, p.h));
        }
        if let Some(u) = self.outdate_level {
            let d = g.shift(q, -u);
            let r = g.relu(d);
            terms.push(g.scale(r, p.theta));
        }
        for &w in &self.backorder_levels {
            let d = g.neg(q);
            let d = g.shift(d, w);
            let r = g.relu(d);
            terms.push(g.scale(r, p.b));
        }
        g.sum(&terms)
    }

    /// Every quantity at which the loss changes slope.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.holding_levels.clone();
        v.extend(self.outdate_level);
        v.extend(self.backorder_levels.iter().copied());
        v
    }
}

pub fn marginal_costs(
    q: f64,
    state: &InventoryState,
    demands: &[f64],
    window: OrderWindow,
    params: &CostParams,
) -> Result<MarginalBreakdown> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::InvalidOrder(q));
    }
    Ok(OrderLoss::new(state, demands, window, params)?.evaluate(q))
}

/// Both sides of the cost decomposition for a trajectory started from an
/// empty system: the realised total cost, and the sum over orders of their
/// marginal and residual costs plus the costs incurred before the first
/// arrival.
pub fn accounting_identity(traj: &Trajectory, params: &CostParams) -> Result<(f64, f64)> {
    let lhs = traj.total_cost();
    let horizon = traj.periods();
    let first = traj.first_arrival().unwrap_or(horizon).min(horizon);
    let mut rhs: f64 = traj.costs[..first].iter().map(|c| c.total()).sum();
    for (m, order) in traj.orders.iter().enumerate() {
        let t = order.placed;
        let window = OrderWindow {
            lead: order.lead,
            next_arrival: traj.orders.get(m + 1).map(|o| o.arrival() - t),
            horizon: Some(horizon - t),
        };
        let b = OrderLoss::new(&traj.states[t], &traj.demands[t..], window, params)?
            .evaluate(order.quantity);
        rhs += b.loss() + b.residual_backorder;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout;

    fn params() -> CostParams {
        CostParams::new(1.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn outdate_recursion() {
        let z = InventoryState::new(3, 2, vec![5.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(outdate_quantity(&z, &[3.0, 1.0], 0).unwrap(), 2.0);
        assert_eq!(outdate_quantity(&z, &[3.0, 1.0], 1).unwrap(), 3.0);
        let empty = InventoryState::zeros(3, 2);
        for s in 0..4 {
            assert_eq!(outdate_quantity(&empty, &[1.0; 4], s).unwrap(), 0.0);
        }
        assert!(matches!(
            outdate_quantity(&z, &[1.0; 9], 4),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn unmet_demand_signs() {
        // sum(z) = 9 with no expiry before the last period.
        let z = InventoryState::new(2, 3, vec![0.0, 9.0, 0.0, 0.0]).unwrap();
        assert_eq!(unmet_demand(&z, &[2.0, 3.0], 1).unwrap(), -4.0);
        // One unit of the oldest slot expires unused in period 0.
        let z = InventoryState::new(2, 3, vec![1.0, 8.0, 0.0, 0.0]).unwrap();
        assert_eq!(outdate_quantity(&z, &[0.0, 12.0], 0).unwrap(), 1.0);
        assert_eq!(unmet_demand(&z, &[0.0, 12.0], 1).unwrap(), 4.0);
        let empty = InventoryState::zeros(2, 3);
        assert_eq!(unmet_demand(&empty, &[1.0, 2.0, 3.0], 2).unwrap(), 6.0);
    }

    fn example_loss() -> OrderLoss {
        let z = InventoryState::zeros(2, 1);
        OrderLoss::new(
            &z,
            &[1.0, 2.0, 1.0],
            OrderWindow::open(1, Some(3)),
            &params(),
        )
        .unwrap()
    }

    #[test]
    fn marginal_cost_example() {
        let l = example_loss();
        let b = l.evaluate(3.0);
        assert_eq!((b.holding, b.outdating, b.backorder), (0.0, 0.0, 10.0));
        let b = l.evaluate(5.0);
        assert_eq!((b.holding, b.outdating, b.backorder), (3.0, 10.0, 0.0));
        assert_eq!(l.loss(0.0), 70.0);
    }

    #[test]
    fn window_too_short() {
        let z = InventoryState::zeros(2, 1);
        let r = OrderLoss::new(&z, &[1.0, 2.0], OrderWindow::open(1, None), &params());
        assert!(matches!(
            r,
            Err(Error::ShortWindow {
                needed: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn graph_loss_matches_plain() {
        let l = example_loss();
        for q in [0.0, 1.5, 3.0, 3.9, 4.2, 7.0] {
            assert_eq!(l.loss_graph(&mut Plain, q), l.loss(q));
        }
    }

    #[test]
    fn identity_on_backlogged_zero_policy() {
        let traj = rollout(
            InventoryState::zeros(2, 1),
            &[1.0, 2.0, 1.0],
            &params(),
            |t, _| Ok((t == 0).then_some((0.0, 1))),
        )
        .unwrap();
        let (lhs, rhs) = accounting_identity(&traj, &params()).unwrap();
        assert_eq!(lhs, 80.0);
        assert_eq!(rhs, 80.0);
    }

    #[test]
    fn identity_with_gap_after_expiry() {
        // K = 1: the first order expires immediately and the system backlogs
        // for several periods before the next arrival.
        let d = [2.0, 1.0, 3.0, 2.0, 1.0, 2.0];
        let traj = rollout(InventoryState::zeros(1, 2), &d, &params(), |t, _| {
            Ok(match t {
                0 => Some((1.0, 1)),
                3 => Some((4.0, 2)),
                _ => None,
            })
        })
        .unwrap();
        let (lhs, rhs) = accounting_identity(&traj, &params()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
