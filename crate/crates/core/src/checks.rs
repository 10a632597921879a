//! Randomised invariant suites shared by the command-line self test and the
//! acceptance tests. Each suite returns a summary instead of panicking.

use std::time::Instant;

use perishlab_autodiff::{Plain, Tape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accounting::accounting_identity;
use crate::config::{CostParams, SystemConfig};
use crate::datagen::{gen_instance, stationarity_report, DgpKind, GenConfig};
use crate::dynamics::{rollout, InventoryState};
use crate::e2e::{sample_loss, setup_training, E2ePolicy, NetKind, TrainConfig};
use crate::error::{Error, Result};
use crate::experiment::Workbench;
use crate::heuristics::{beta_coefficient, pb_order, PbConfig, PbScenario, PbStatus};
use crate::poi::{exact_poi, smoothed_poi, PoiConfig};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Cases actually checked.
    pub cases: usize,
    /// Largest error seen, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} cases, worst {:.3e} (tol {:.0e}), {:.2}s{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance,
            self.seconds,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(", {}", self.detail)
            }
        )
    }
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Self(Instant::now())
    }

    fn finish(
        self,
        name: &str,
        cases: usize,
        worst: f64,
        tolerance: f64,
        detail: String,
    ) -> CheckOutcome {
        CheckOutcome {
            name: name.into(),
            passed: cases > 0 && worst <= tolerance,
            cases,
            worst,
            tolerance,
            seconds: self.0.elapsed().as_secs_f64(),
            detail,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// A random system, demand path and periodic random ordering policy.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub k: usize,
    pub lbar: usize,
    pub r: usize,
    pub offset: usize,
    pub demands: Vec<f64>,
    pub orders: Vec<(f64, usize)>,
    pub params: CostParams,
}

impl RandomCase {
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        let k = rng.random_range(2..=5);
        let lbar = rng.random_range(1..=4);
        let r = rng.random_range(2..=5);
        let t = rng.random_range(1..=60);
        let demands = (0..t).map(|_| rng.random_range(0.0..10.0)).collect();
        let orders = (0..t / r + 1)
            .map(|_| (rng.random_range(0.0..25.0), rng.random_range(1..=lbar)))
            .collect();
        let params = CostParams {
            h: rng.random_range(0.1..5.0),
            b: rng.random_range(0.1..20.0),
            theta: rng.random_range(0.1..20.0),
        };
        Self {
            k,
            lbar,
            r,
            offset: rng.random_range(0..r),
            demands,
            orders,
            params,
        }
    }

    /// Run from an empty system with demands and order sizes scaled by `gamma`.
    pub fn run(&self, gamma: f64) -> Result<crate::dynamics::Trajectory> {
        let demands: Vec<f64> = self.demands.iter().map(|d| d * gamma).collect();
        let z0 = InventoryState::zeros(self.k, self.lbar);
        rollout(z0, &demands, &self.params, |t, _| {
            if t >= self.offset && (t - self.offset).is_multiple_of(self.r) {
                let (q, l) = self.orders[(t - self.offset) / self.r];
                Ok(Some((q * gamma, l)))
            } else {
                Ok(None)
            }
        })
    }
}

/// Realised cost against the per-order decomposition.
pub fn accounting_suite(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let timer = Timer::start();
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let c = RandomCase::draw(&mut substream(seed, &[1, i as u64]));
        let (lhs, rhs) = accounting_identity(&c.run(1.0)?, &c.params)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(timer.finish("accounting identity", cases, worst, 1e-9, String::new()))
}

/// Scaling demands and orders by `gamma` scales the cost by `gamma`.
pub fn homogeneity_suite(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let timer = Timer::start();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for i in 0..cases {
        let c = RandomCase::draw(&mut substream(seed, &[2, i as u64]));
        let base = c.run(1.0)?.total_cost();
        for gamma in [0.5, 2.0, 10.0] {
            let scaled = c.run(gamma)?.total_cost();
            worst = worst.max(rel(scaled, gamma * base));
            n += 1;
        }
    }
    Ok(timer.finish("cost homogeneity", n, worst, 1e-12, String::new()))
}

/// Reverse-mode gradient of the PIL training loss against central
/// differences along random directions, at random parameters and samples.
/// Points within `kink` of a non-smooth switch are skipped.
pub fn gradient_suite(seed: u64, points: usize) -> Result<CheckOutcome> {
    const STEP: f64 = 1e-6;
    const KINK: f64 = 1e-4;
    let timer = Timer::start();
    let system = SystemConfig {
        k: 3,
        lbar: 3,
        r: 2,
        ..SystemConfig::default()
    };
    let params = CostParams::default();
    let mut gen = GenConfig::new(DgpKind::Scr, 2, 2, seed, 0);
    gen.lbar = system.lbar;
    let (set, _) = gen_instance(&gen)?;
    let bench = Workbench::new(set, system, params)?;
    let cfg = TrainConfig {
        lambda_demand: 0.5,
        lambda_lead: 0.1,
        lambda_poi1: 0.5,
        lambda_poi2: 0.2,
        ..TrainConfig::default()
    };
    let setup = setup_training(
        NetKind::Pil,
        &bench.samples,
        &bench.spec,
        &bench.system,
        &bench.params,
        &cfg,
    )?;
    let net = &setup.net;
    let mut rng = substream(seed, &[3]);
    let (mut checked, mut skipped) = (0, 0);
    let mut worst: f64 = 0.0;
    while checked < points && skipped < 20 * points {
        let p = &setup.prepared[rng.random_range(0..setup.prepared.len())];
        let theta: Vec<f64> = net
            .params
            .iter()
            .map(|w| w + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut dir: Vec<f64> = (0..theta.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);

        let mut tape = Tape::new();
        let vars = tape.vars(&theta);
        let total = sample_loss(net, &mut tape, &vars, p, &cfg)?.total;
        if tape.kink_margin() < KINK {
            skipped += 1;
            continue;
        }
        let grad = tape.gradient(total)?.wrt_all(&vars);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let at = |s: f64| -> Result<f64> {
            let t: Vec<f64> = theta.iter().zip(&dir).map(|(w, d)| w + s * d).collect();
            Ok(sample_loss(net, &mut Plain, &t, p, &cfg)?.total)
        };
        let numeric = (at(STEP)? - at(-STEP)?) / (2.0 * STEP);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
        checked += 1;
    }
    let detail = format!("{skipped} near-kink points skipped");
    let mut out = timer.finish("PIL loss gradient", checked, worst, 1e-4, detail);
    out.passed &= checked == points;
    Ok(out)
}

/// Narrow-kernel smoothed projection against the exact one at integer leads.
pub fn poi_suite(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let timer = Timer::start();
    let cfg = PoiConfig { bandwidth: 1e-4 };
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let mut rng = substream(seed, &[4, i as u64]);
        let k = rng.random_range(1..=6);
        let lbar = rng.random_range(1..=5);
        let levels = (0..k + lbar - 1)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..15.0)
                }
            })
            .collect();
        let state = InventoryState::new(k, lbar, levels)?;
        let demands: Vec<f64> = (0..k + lbar).map(|_| rng.random_range(0.0..8.0)).collect();
        let lead = rng.random_range(1..=lbar);
        let exact = exact_poi(&state, &demands, lead)?;
        let smooth = smoothed_poi(&state, &demands, lead as f64, &cfg)?;
        for (a, b) in exact.iter().zip(&smooth) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(timer.finish("POI convergence", cases, worst, 1e-6, String::new()))
}

/// The balancing root satisfies its equation on sampled scenarios, and the
/// worked two-period example crosses at 298/76.
pub fn pb_suite(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let timer = Timer::start();
    let mut worst: f64 = 0.0;
    let mut boundary = 0;
    for i in 0..cases {
        let mut rng = substream(seed, &[5, i as u64]);
        let k = rng.random_range(2..=5);
        let lbar = rng.random_range(1..=4);
        let r = rng.random_range(1..=4);
        let params = CostParams {
            h: 1.0,
            b: rng.random_range(2.0..20.0),
            theta: rng.random_range(0.0..20.0),
        };
        let levels = (0..k + lbar - 1)
            .map(|_| rng.random_range(0.0..4.0))
            .collect();
        let state = InventoryState::new(k, lbar, levels)?;
        let mean = rng.random_range(1.0..8.0);
        let n = rng.random_range(20..=100);
        let scenarios: Vec<PbScenario> = (0..n)
            .map(|_| PbScenario {
                demands: (0..k + lbar + r)
                    .map(|_| (mean + 0.5 * mean * rng.sample::<f64, _>(StandardNormal)).max(0.0))
                    .collect(),
                lead: rng.random_range(1..=lbar),
                next_lead: rng.random_range(1..=lbar),
            })
            .collect();
        let mean_lead =
            scenarios.iter().map(|s| s.lead as f64).sum::<f64>() / scenarios.len() as f64;
        let cfg = PbConfig {
            beta: beta_coefficient(k, mean_lead, &params),
            q_max: 10.0 * (k + lbar + r) as f64 * mean,
            tol: 1e-9,
        };
        let out = pb_order(&state, &scenarios, r, &cfg, &params)?;
        let err = match out.status {
            PbStatus::Balanced => out.gap.abs() / out.scale.max(1e-12),
            PbStatus::AtZero => {
                boundary += 1;
                if out.q == 0.0 && out.gap >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PbStatus::AtUpperBound => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    let z = InventoryState::zeros(2, 1);
    let worked = PbScenario {
        demands: vec![1.0, 2.0, 1.0],
        lead: 1,
        next_lead: 1,
    };
    let params = CostParams::new(1.0, 10.0, 10.0)?;
    let cfg = PbConfig {
        beta: beta_coefficient(2, 1.0, &params),
        q_max: 100.0,
        tol: 1e-9,
    };
    let q = pb_order(&z, &[worked], 2, &cfg, &params)?.q;
    let mut out = timer.finish(
        "PB balance",
        cases,
        worst,
        1e-4,
        format!("{boundary} at zero, worked example q = {q:.4}"),
    );
    out.passed &= (q - 3.921).abs() < 1e-3;
    Ok(out)
}

/// Long-run feature, noise and lead-time moments of the correlated
/// generators against their stationary values.
pub fn moments_suite(seed: u64, len: usize) -> Result<CheckOutcome> {
    const TOL: f64 = 0.05;
    let timer = Timer::start();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let mut flagged = Vec::new();
    for kind in [DgpKind::Cc, DgpKind::Cr, DgpKind::Scr] {
        let g = GenConfig::new(kind, 10, 10, seed, 0);
        for row in stationarity_report(&g, len, TOL)? {
            let scale = if row.mean_ref != 0.0 {
                row.mean_ref.abs()
            } else {
                row.sd_ref
            };
            let err = ((row.mean - row.mean_ref).abs() / scale)
                .max((row.sd - row.sd_ref).abs() / row.sd_ref);
            worst = worst.max(err);
            if row.flagged {
                flagged.push(format!("{kind}/{}", row.stream));
            }
            n += 1;
        }
    }
    let detail = if flagged.is_empty() {
        String::new()
    } else {
        format!("off: {}", flagged.join(" "))
    };
    Ok(timer.finish("generator moments", n, worst, TOL, detail))
}

/// Suites 1 to 6 at their full sizes.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        accounting_suite(seed, 200)?,
        homogeneity_suite(seed, 50)?,
        gradient_suite(seed, 100)?,
        poi_suite(seed, 100)?,
        pb_suite(seed, 100)?,
        moments_suite(seed, 10_000)?,
    ])
}

/// Probe a trained PIL policy with single-slot on-hand states: for each
/// context and each remaining-lifetime slot, the order must not grow with the
/// stock in that slot by more than `slack` of the largest probed order.
pub fn pil_structure(
    policy: &E2ePolicy,
    bench: &Workbench,
    contexts: usize,
    slack: f64,
) -> Result<CheckOutcome> {
    let timer = Timer::start();
    let a = &policy.net.arch;
    if a.kind != NetKind::Pil {
        return Err(Error::Config("structure probe needs a PIL network".into()));
    }
    if bench.samples.is_empty() {
        return Err(Error::Empty("no samples to probe"));
    }
    let (k, dim) = (a.system.k, a.system.state_dim());
    let top = 3.0 * a.system.r.max(1) as f64 * a.demand_scale;
    let grid: Vec<f64> = (0..=40).map(|i| top * i as f64 / 40.0).collect();
    let step = (bench.samples.len() / contexts.max(1)).max(1);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for s in bench.samples.iter().step_by(step).take(contexts) {
        for slot in 0..k {
            let qs = grid
                .iter()
                .map(|&v| {
                    let mut z = vec![0.0; dim];
                    z[slot] = v;
                    policy.net.decide(&s.x, &z)
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = qs.iter().cloned().fold(0.0, f64::max).max(1e-12);
            for w in qs.windows(2) {
                worst = worst.max((w[1] - w[0]) / scale);
            }
            n += 1;
        }
    }
    Ok(timer.finish(
        "PIL order monotone in stock",
        n,
        worst.max(0.0),
        slack,
        String::new(),
    ))
}
