use perishlab::datagen::{gen_instance, DgpKind, GenConfig};
use perishlab::dynamics::InventoryState;
use perishlab::e2e::in_sample_cost;
use perishlab::features::{build_samples, EpochGrid, FeatureSpec, Standardizer};
use perishlab::heuristics::{pb_order, PbConfig};
use perishlab::policy::{Decision, Policy};
use perishlab::pto::*;
use perishlab::rng::substream;
use perishlab::{CostParams, SystemConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn constant_forecaster(p: usize, outputs: &[f64]) -> RidgeForecaster {
    RidgeForecaster {
        inputs: Standardizer {
            mean: vec![0.0; p],
            sd: vec![1.0; p],
        },
        weights: outputs
            .iter()
            .map(|&c| {
                let mut row = vec![c];
                row.extend(std::iter::repeat_n(0.0, p));
                row
            })
            .collect(),
    }
}

fn flat_residuals(d: usize) -> ResidualModel {
    fit_residual_mvn(&vec![vec![0.0; d]; d + 1]).unwrap()
}

fn degenerate_models(demands: &[f64], leads: [f64; 2]) -> PtoModels {
    PtoModels {
        demand: constant_forecaster(3, demands),
        lead: constant_forecaster(3, &leads),
        demand_residual: flat_residuals(demands.len()),
        lead_residual: flat_residuals(2),
    }
}

fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|r| r.as_slice()).collect()
}

#[test]
fn constant_demand_is_predicted_exactly() {
    let mut rng = substream(1, &[]);
    let x: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let y = vec![vec![4.0, 4.0]; 50];
    let f = RidgeForecaster::fit(&rows(&x), &rows(&y), DEFAULT_RIDGE).unwrap();
    for r in &x {
        for p in f.predict(r) {
            assert!((p - 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn ar1_forecast_error_near_innovation_variance() {
    let (phi, sd) = (0.7, 1.0);
    let noise = Normal::new(0.0, sd).unwrap();
    let mut rng = substream(2, &[]);
    let mut s = vec![0.0f64];
    for _ in 0..6000 {
        let last = *s.last().unwrap();
        s.push(5.0 + phi * (last - 5.0) + noise.sample(&mut rng));
    }
    let x: Vec<Vec<f64>> = (1..s.len()).map(|t| vec![s[t - 1]]).collect();
    let y: Vec<Vec<f64>> = (1..s.len()).map(|t| vec![s[t]]).collect();
    let split = 4000;
    let f = RidgeForecaster::fit(&rows(&x[..split]), &rows(&y[..split]), DEFAULT_RIDGE).unwrap();
    let mse = (split..x.len())
        .map(|i| (f.predict(&x[i])[0] - y[i][0]).powi(2))
        .sum::<f64>()
        / (x.len() - split) as f64;
    assert!((mse / (sd * sd) - 1.0).abs() < 0.1, "{mse}");
}

#[test]
fn period_two_pattern_recovered_from_lag_two() {
    let s: Vec<f64> = (0..40)
        .map(|t| if t % 2 == 0 { 3.0 } else { 7.0 })
        .collect();
    let x: Vec<Vec<f64>> = (2..40).map(|t| vec![s[t - 2], s[t - 1]]).collect();
    let y: Vec<Vec<f64>> = (2..40).map(|t| vec![s[t]]).collect();
    let f = RidgeForecaster::fit(&rows(&x), &rows(&y), 1e-12).unwrap();
    assert!((f.predict(&[3.0, 7.0])[0] - 3.0).abs() < 1e-6);
    assert!((f.predict(&[7.0, 3.0])[0] - 7.0).abs() < 1e-6);
}

#[test]
fn mvn_fit_recovers_covariance() {
    let cov: [[f64; 3]; 3] = [[1.0, 0.6, -0.3], [0.6, 2.0, 0.4], [-0.3, 0.4, 0.5]];
    // Lower Cholesky factor of `cov`, computed by hand.
    let l11 = 1.0f64;
    let l21 = 0.6;
    let l22 = (2.0f64 - 0.36).sqrt();
    let l31 = -0.3;
    let l32 = (0.4 - l21 * l31) / l22;
    let l33 = (0.5f64 - l31 * l31 - l32 * l32).sqrt();
    let l = [[l11, 0.0, 0.0], [l21, l22, 0.0], [l31, l32, l33]];
    let mut rng = substream(3, &[]);
    let n = Normal::new(0.0, 1.0).unwrap();
    let res: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            let e: Vec<f64> = (0..3).map(|_| n.sample(&mut rng)).collect();
            (0..3)
                .map(|i| (0..3).map(|j| l[i][j] * e[j]).sum::<f64>())
                .collect()
        })
        .collect();
    let m = fit_residual_mvn(&res).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let tol = 0.05 * (cov[i][i] * cov[j][j]).sqrt();
            assert!((m.covariance[i][j] - cov[i][j]).abs() < tol, "({i},{j})");
        }
    }
    for _ in 0..1000 {
        let s = m.sample(&mut rng);
        for (v, (lo, hi)) in s.iter().zip(m.lower.iter().zip(&m.upper)) {
            assert!(v >= lo && v <= hi);
        }
    }
}

#[test]
fn too_few_residuals() {
    assert!(fit_residual_mvn(&vec![vec![0.0; 3]; 3]).is_err());
    assert!(fit_residual_mvn(&[]).is_err());
}

#[test]
fn degenerate_scenarios_are_the_point_forecast() {
    let config = SystemConfig {
        k: 2,
        lbar: 4,
        ..SystemConfig::default()
    };
    let m = degenerate_models(&[1.0, 2.5, 0.0], [3.7, 1.2]);
    let s = sample_scenarios(&[0.0; 3], &m, 1, &mut substream(0, &[]), &config);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].demands, vec![1.0, 2.5, 0.0]);
    assert_eq!((s[0].lead, s[0].next_lead), (3, 1));
    let m = degenerate_models(&[1.0], [9.0, -2.0]);
    let s = sample_scenarios(&[0.0; 3], &m, 1, &mut substream(0, &[]), &config);
    assert_eq!((s[0].lead, s[0].next_lead), (4, 1));
}

#[test]
fn scenario_mean_tracks_forecast() {
    let config = SystemConfig::default();
    let d = 3;
    let mut rng = substream(4, &[]);
    let n = Normal::new(0.0, 1.0).unwrap();
    let res: Vec<Vec<f64>> = (0..5000)
        .map(|_| (0..d).map(|_| n.sample(&mut rng)).collect())
        .collect();
    let mut m = degenerate_models(&[20.0, 30.0, 40.0], [3.0, 3.0]);
    m.demand_residual = fit_residual_mvn(&res).unwrap();
    let big = 2000;
    let s = sample_scenarios(&[0.0; 3], &m, big, &mut substream(5, &[]), &config);
    for (i, mu) in [20.0, 30.0, 40.0].iter().enumerate() {
        let mean = s.iter().map(|c| c.demands[i]).sum::<f64>() / big as f64;
        let sd = m.demand_residual.covariance[i][i].sqrt();
        assert!(
            (mean - mu - m.demand_residual.mean[i]).abs() < 3.0 * sd / (big as f64).sqrt() + 0.01
        );
    }
    assert!(s.iter().all(|c| c.demands.iter().all(|&v| v >= 0.0)));
}

#[test]
fn worked_example_through_the_plug_in() {
    let config = SystemConfig {
        k: 2,
        lbar: 1,
        r: 2,
        ..SystemConfig::default()
    };
    let params = CostParams::new(1.0, 10.0, 10.0).unwrap();
    let models = degenerate_models(&[1.0, 2.0, 1.0], [1.0, 1.0]);
    let spec = FeatureSpec::new(&params);
    let policy = PtoPolicy::new(models.clone(), config, params, spec, 0);
    let x = [0.0; 3];
    assert!((policy.beta(&x) - 6.0 / 7.0).abs() < 1e-15);
    let scenarios = sample_scenarios(&x, &models, 5, &mut substream(0, &[]), &config);
    let cfg = PbConfig {
        beta: policy.beta(&x),
        q_max: 100.0,
        tol: 1e-6,
    };
    let z = InventoryState::zeros(2, 1);
    let q = pb_order(&z, &scenarios, config.r, &cfg, &params).unwrap().q;
    assert!((q - 3.921).abs() < 1e-3, "{q}");

    let zero = degenerate_models(&[0.0; 3], [1.0, 1.0]);
    let scenarios = sample_scenarios(&x, &zero, 5, &mut substream(0, &[]), &config);
    assert_eq!(
        pb_order(&z, &scenarios, config.r, &cfg, &params).unwrap().q,
        0.0
    );
}

fn small_instance() -> (
    perishlab::data::ScenarioSet,
    SystemConfig,
    CostParams,
    FeatureSpec,
) {
    let (set, _) = gen_instance(&GenConfig::new(DgpKind::Scr, 2, 2, 5, 0)).unwrap();
    let config = SystemConfig::default();
    let params = CostParams::default();
    (set, config, params, FeatureSpec::new(&params))
}

#[test]
fn fitted_policy_orders_deterministically_and_scales() {
    let (set, config, params, spec) = small_instance();
    let samples = build_samples(&set, &config, &spec, EpochGrid::Daily, None).unwrap();
    let models = fit_pto(&samples, DEFAULT_RIDGE).unwrap();
    let mut policy = PtoPolicy::new(models, config, params, spec, 9);
    policy.scenarios = 40;

    let gamma = 2.0;
    let scaled = set.scaled(gamma);
    let s2 = build_samples(&scaled, &config, &spec, EpochGrid::Daily, None).unwrap();
    let mut policy2 = PtoPolicy::new(
        fit_pto(&s2, DEFAULT_RIDGE).unwrap(),
        config,
        params,
        spec,
        9,
    );
    policy2.scenarios = 40;

    let z = InventoryState::new(config.k, config.lbar, {
        let mut v = vec![0.0; config.state_dim()];
        v[0] = 3.0;
        v[config.k - 1] = -2.0;
        v[config.k + 1] = 5.0;
        v
    })
    .unwrap();
    let z2 = z.scaled(gamma);
    for day in [config.t_in, config.t_in + 3, config.t_in + 50] {
        let d = Decision {
            set: &set,
            product: 1,
            day,
            state: &z,
        };
        let q = policy.order(&d).unwrap();
        assert!(q.is_finite() && q >= 0.0);
        assert_eq!(q, policy.order(&d).unwrap());
        let d2 = Decision {
            set: &scaled,
            product: 1,
            day,
            state: &z2,
        };
        let q2 = policy2.order(&d2).unwrap();
        assert!(
            (q2 - gamma * q).abs() <= 1e-6 * (1.0 + q2.abs()),
            "{q} {q2}"
        );
    }
}

#[test]
fn ppb_never_loses_to_pb_in_sample() {
    let (set, mut config, params, spec) = small_instance();
    config.t_in = 60;
    let samples = build_samples(&set, &config, &spec, EpochGrid::Daily, None).unwrap();
    let mut pb = PtoPolicy::new(
        fit_pto(&samples, DEFAULT_RIDGE).unwrap(),
        config,
        params,
        spec,
        1,
    );
    pb.scenarios = 20;
    let offsets = [-0.2, 0.0, 0.2];
    let (out, ppb) = tune_ppb(&pb, &set, &samples, &offsets).unwrap();
    let base = in_sample_cost(&pb, &set, &config, &params, &spec).unwrap();
    let tuned = in_sample_cost(&ppb, &set, &config, &params, &spec).unwrap();
    assert!(tuned <= base);
    assert_eq!(out.costs.len(), 3);
    assert_eq!(ppb.beta_offset, out.offset);
    // Reordering the grid does not change the choice.
    let (again, _) = tune_ppb(&pb, &set, &samples, &[0.2, -0.2, 0.0]).unwrap();
    assert_eq!(again.offset, out.offset);
}
