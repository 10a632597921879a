use serde::{Deserialize, Serialize};

use crate::config::CostParams;
use crate::error::{Error, Result};

/// Inventory by remaining lifetime followed by the order pipeline.
///
/// With lifetime `K` and lead-time bound `Lbar` the vector has `K + Lbar - 1`
/// slots. Slot `i` (1-based) of the state at period `t` holds units that
/// expire at the end of period `t + i - 1`; slots `1..K-1` are on hand, slot
/// `K` is the quantity becoming available in `t` net of any carried
/// backorder, and slots beyond `K` are still in transit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryState {
    k: usize,
    levels: Vec<f64>,
}

impl InventoryState {
    pub fn zeros(k: usize, lbar: usize) -> Self {
        Self {
            k,
            levels: vec![0.0; k + lbar - 1],
        }
    }

    pub fn new(k: usize, lbar: usize, levels: Vec<f64>) -> Result<Self> {
        let expected = k + lbar - 1;
        if levels.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: levels.len(),
            });
        }
        Ok(Self { k, levels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lbar(&self) -> usize {
        self.levels.len() + 1 - self.k
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [f64] {
        &mut self.levels
    }

    /// Net inventory available to meet demand this period (slots `1..=K`).
    pub fn available(&self) -> f64 {
        self.levels[..self.k].iter().sum()
    }

    /// Inventory position: everything on hand or in transit, net of backorders.
    pub fn position(&self) -> f64 {
        self.levels.iter().sum()
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            k: self.k,
            levels: self.levels.iter().map(|v| v * gamma).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodCost {
    pub holding: f64,
    pub backorder: f64,
    pub outdating: f64,
}

impl PeriodCost {
    pub fn total(&self) -> f64 {
        self.holding + self.backorder + self.outdating
    }
}

/// Advance one period: serve `demand` FIFO, age stock, move the pipeline and
/// insert an optional order `(q, lead)` placed this period.
pub fn transition(
    state: &InventoryState,
    demand: f64,
    placed: Option<(f64, usize)>,
    params: &CostParams,
) -> Result<(InventoryState, PeriodCost)> {
    if !(demand.is_finite() && demand >= 0.0) {
        return Err(Error::NegativeDemand(demand));
    }
    let k = state.k;
    let z = &state.levels;
    let n = z.len();
    let lbar = n + 1 - k;

    let available: f64 = z[..k].iter().sum();
    let cost = PeriodCost {
        holding: params.h * (available - demand).max(0.0),
        backorder: params.b * (demand - available).max(0.0),
        outdating: params.theta * (z[0] - demand).max(0.0),
    };

    let mut next = vec![0.0; n];
    let mut cum = 0.0;
    for i in 0..k - 1 {
        cum += z[i];
        next[i] = (z[i + 1] - (demand - cum).max(0.0)).max(0.0);
    }
    cum += z[k - 1];
    let incoming = if k < n { z[k] } else { 0.0 };
    next[k - 1] = incoming - (demand - cum).max(0.0);
    if n > k {
        next[k..n - 1].copy_from_slice(&z[k + 1..]);
    }

    if let Some((q, lead)) = placed {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::InvalidOrder(q));
        }
        if lead == 0 || lead > lbar {
            return Err(Error::LeadTime { lead, lbar });
        }
        next[k + lead - 2] += q;
    }
    Ok((InventoryState { k, levels: next }, cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEvent {
    /// Period of placement, relative to the trajectory start.
    pub placed: usize,
    pub quantity: f64,
    /// Effective lead time after the no-crossing adjustment.
    pub lead: usize,
}

impl OrderEvent {
    pub fn arrival(&self) -> usize {
        self.placed + self.lead
    }
}

/// A simulated run over `demands.len()` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `states[t]` is the state at the start of period `t`; one extra final state.
    pub states: Vec<InventoryState>,
    pub costs: Vec<PeriodCost>,
    pub demands: Vec<f64>,
    pub orders: Vec<OrderEvent>,
}

impl Trajectory {
    pub fn periods(&self) -> usize {
        self.demands.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().map(PeriodCost::total).sum()
    }

    pub fn first_arrival(&self) -> Option<usize> {
        self.orders.first().map(OrderEvent::arrival)
    }
}

/// Roll the system forward over `demands`, asking `decide` for an order at
/// every period. `decide` returns `Some((q, lead))` to place an order.
///
/// Arrivals never cross: an order that would arrive before the previous one
/// is delayed to the previous arrival period.
pub fn rollout<F>(
    initial: InventoryState,
    demands: &[f64],
    params: &CostParams,
    mut decide: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, &InventoryState) -> Result<Option<(f64, usize)>>,
{
    let lbar = initial.lbar();
    let mut states = Vec::with_capacity(demands.len() + 1);
    let mut costs = Vec::with_capacity(demands.len());
    let mut orders: Vec<OrderEvent> = Vec::new();
    let mut state = initial;
    for (t, &d) in demands.iter().enumerate() {
        let placed = match decide(t, &state)? {
            Some((q, lead)) => {
                if !(q.is_finite() && q >= 0.0) {
                    return Err(Error::InvalidOrder(q));
                }
                let lead = lead.clamp(1, lbar);
                let arrival = orders
                    .last()
                    .map_or(t + lead, |o| o.arrival().max(t + lead));
                let lead = arrival - t;
                orders.push(OrderEvent {
                    placed: t,
                    quantity: q,
                    lead,
                });
                Some((q, lead))
            }
            None => None,
        };
        let (next, cost) = transition(&state, d, placed, params)?;
        states.push(state);
        costs.push(cost);
        state = next;
    }
    states.push(state);
    Ok(Trajectory {
        states,
        costs,
        demands: demands.to_vec(),
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CostParams {
        CostParams::new(1.0, 10.0, 10.0).unwrap()
    }

    fn state(k: usize, lbar: usize, v: &[f64]) -> InventoryState {
        InventoryState::new(k, lbar, v.to_vec()).unwrap()
    }

    #[test]
    fn fifo_consumption_and_aging() {
        let z = state(3, 2, &[2.0, 3.0, 5.0, 4.0]);
        let (next, cost) = transition(&z, 4.0, None, &params()).unwrap();
        assert_eq!(next.levels(), &[1.0, 5.0, 4.0, 0.0]);
        assert_eq!(cost.holding, 6.0);
        assert_eq!(cost.outdating, 0.0);
    }

    #[test]
    fn zero_demand_only_ages() {
        let z = state(3, 2, &[2.0, 3.0, 5.0, 4.0]);
        let (next, cost) = transition(&z, 0.0, None, &params()).unwrap();
        assert_eq!(next.levels(), &[3.0, 5.0, 4.0, 0.0]);
        assert_eq!(cost.outdating, 20.0);
    }

    #[test]
    fn shortage_is_carried_in_slot_k() {
        let z = state(3, 2, &[1.0, 0.0, 0.0, 0.0]);
        let (next, cost) = transition(&z, 3.0, None, &params()).unwrap();
        assert_eq!(next.levels(), &[0.0, 0.0, -2.0, 0.0]);
        assert_eq!(cost.backorder, 20.0);
        assert_eq!(cost.holding, 0.0);
    }

    #[test]
    fn order_lands_in_pipeline_slot() {
        let z = InventoryState::zeros(2, 3);
        let (next, _) = transition(&z, 0.0, Some((4.0, 3)), &params()).unwrap();
        assert_eq!(next.levels(), &[0.0, 0.0, 0.0, 4.0]);
        let (next, _) = transition(&z, 0.0, Some((4.0, 1)), &params()).unwrap();
        assert_eq!(next.levels(), &[0.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = InventoryState::zeros(2, 2);
        assert!(matches!(
            transition(&z, -1.0, None, &params()),
            Err(Error::NegativeDemand(_))
        ));
        assert!(matches!(
            transition(&z, 1.0, Some((1.0, 3)), &params()),
            Err(Error::LeadTime { lead: 3, lbar: 2 })
        ));
        assert!(InventoryState::new(2, 2, vec![0.0; 4]).is_err());
    }

    #[test]
    fn zero_policy_backorders_accumulate() {
        let traj = rollout(
            InventoryState::zeros(2, 1),
            &[1.0, 2.0, 1.0],
            &params(),
            |_, _| Ok(None),
        )
        .unwrap();
        // Unmet demand grows 1, 3, 4.
        assert_eq!(traj.total_cost(), 80.0);
    }

    #[test]
    fn crossing_arrivals_are_delayed() {
        let traj = rollout(InventoryState::zeros(2, 4), &[0.0; 6], &params(), |t, _| {
            Ok(match t {
                0 => Some((1.0, 4)),
                1 => Some((1.0, 1)),
                _ => None,
            })
        })
        .unwrap();
        assert_eq!(traj.orders[0].arrival(), 4);
        assert_eq!(traj.orders[1].arrival(), 4);
        assert_eq!(traj.orders[1].lead, 3);
    }

    #[test]
    fn invalid_order_is_an_error() {
        let r = rollout(InventoryState::zeros(2, 1), &[1.0], &params(), |_, _| {
            Ok(Some((f64::NAN, 1)))
        });
        assert!(matches!(r, Err(Error::InvalidOrder(_))));
    }
}
