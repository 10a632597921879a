use perishlab::accounting::{accounting_identity, marginal_costs, OrderLoss, OrderWindow};
use perishlab::{rollout, CostParams, InventoryState};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    k: usize,
    lbar: usize,
    r: usize,
    offset: usize,
    demands: Vec<f64>,
    orders: Vec<(f64, usize)>,
    params: CostParams,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..=5, 1usize..=4, 2usize..=5, 1usize..=60).prop_flat_map(|(k, lbar, r, t)| {
        (
            Just((k, lbar, r)),
            0..r,
            prop::collection::vec(0.0f64..10.0, t),
            prop::collection::vec((0.0f64..25.0, 1..=lbar), t / r + 1),
            (0.1f64..5.0, 0.1f64..20.0, 0.1f64..20.0),
        )
            .prop_map(
                |((k, lbar, r), offset, demands, orders, (h, b, theta))| Case {
                    k,
                    lbar,
                    r,
                    offset,
                    demands,
                    orders,
                    params: CostParams::new(h, b, theta).unwrap(),
                },
            )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn identity_holds_for_random_policies(c in case()) {
        let traj = rollout(InventoryState::zeros(c.k, c.lbar), &c.demands, &c.params, |t, _| {
            if t >= c.offset && (t - c.offset) % c.r == 0 {
                Ok(Some(c.orders[(t - c.offset) / c.r]))
            } else {
                Ok(None)
            }
        }).unwrap();
        let (lhs, rhs) = accounting_identity(&traj, &c.params).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn loss_is_convex(c in case(), q in prop::array::uniform3(0.0f64..40.0), slot in 0usize..64) {
        let dim = c.k + c.lbar - 1;
        let mut levels = vec![0.0; dim];
        levels[slot % dim] = c.demands[0] * 2.0;
        let z = InventoryState::new(c.k, c.lbar, levels).unwrap();
        let mut d = c.demands.clone();
        d.resize(c.k + c.lbar, 1.0);
        let l = OrderLoss::new(&z, &d, OrderWindow::open(c.orders[0].1, Some(c.orders[0].1 + c.r)), &c.params).unwrap();
        let mut q = q;
        q.sort_by(f64::total_cmp);
        let [a, m, b] = q;
        prop_assume!(b - a > 1e-6);
        let w = (m - a) / (b - a);
        let bound = (1.0 - w) * l.loss(a) + w * l.loss(b);
        prop_assert!(l.loss(m) <= bound + 1e-9 * (1.0 + bound));
    }

    #[test]
    fn subgradient_matches_differences(c in case(), q in 0.0f64..40.0) {
        let z = InventoryState::zeros(c.k, c.lbar);
        let mut d = c.demands.clone();
        d.resize(c.k + c.lbar, 2.0);
        let l = OrderLoss::new(&z, &d, OrderWindow::open(1, None), &c.params).unwrap();
        let eps = 1e-6;
        prop_assume!(l.breakpoints().iter().all(|&u| (u - q).abs() > 10.0 * eps));
        let fd = (l.loss(q + eps) - l.loss(q - eps)) / (2.0 * eps);
        let g = l.subgradient(q);
        prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "fd {fd} g {g}");
    }

    #[test]
    fn outdate_and_unmet_are_monotone(c in case(), levels in prop::collection::vec(0.0f64..8.0, 16)) {
        let dim = c.k + c.lbar - 1;
        let z = InventoryState::new(c.k, c.lbar, levels[..dim].to_vec()).unwrap();
        let mut d = c.demands.clone();
        d.resize(dim + 1, 0.5);
        let mut prev_b = 0.0;
        let mut prev_u = f64::NEG_INFINITY;
        for s in 0..dim {
            let b = perishlab::accounting::outdate_quantity(&z, &d, s).unwrap();
            prop_assert!(b >= prev_b && b >= 0.0);
            prev_b = b;
        }
        for s in 0..=dim {
            let u = perishlab::accounting::unmet_demand(&z, &d, s).unwrap();
            prop_assert!(u >= prev_u - 1e-12);
            prev_u = u;
        }
    }
}

#[test]
fn zero_demand_identity_is_holding_plus_outdating() {
    let p = CostParams::new(1.0, 10.0, 10.0).unwrap();
    let traj = rollout(InventoryState::zeros(3, 2), &[0.0; 8], &p, |t, _| {
        Ok((t % 3 == 0).then_some((2.0, 2)))
    })
    .unwrap();
    let (lhs, rhs) = accounting_identity(&traj, &p).unwrap();
    let expected: f64 = traj.costs.iter().map(|c| c.holding + c.outdating).sum();
    assert_eq!(traj.costs.iter().map(|c| c.backorder).sum::<f64>(), 0.0);
    assert!((lhs - expected).abs() < 1e-12 && (rhs - expected).abs() < 1e-12);
}

#[test]
fn marginal_costs_rejects_negative_quantity() {
    let p = CostParams::default();
    let z = InventoryState::zeros(2, 1);
    assert!(marginal_costs(-1.0, &z, &[1.0; 3], OrderWindow::open(1, None), &p).is_err());
}
