//! Synthetic demand, covariate and lead-time generation.
//!
//! Demand for SKU `i` at DC `j` is
//! `exp(x1 - 0.5) + 2 (x2 + x3 - 1)^2 + |x4 - 0.5| + eps`, floored at zero,
//! where `x1` is specific to the pair, `x2` to the SKU, `x3` to the DC and
//! `x4` is shared by every product.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ProductSeries, ScenarioSet};
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DgpKind {
    /// Independent demand, constant lead time.
    Ic,
    /// Autocorrelated demand, constant lead time.
    Cc,
    /// Autocorrelated demand and lead time.
    Cr,
    /// As `Cr` with a shock common to demand noise and lead time.
    Scr,
}

impl DgpKind {
    pub const ALL: [DgpKind; 4] = [DgpKind::Ic, DgpKind::Cc, DgpKind::Cr, DgpKind::Scr];

    pub fn random_lead(self) -> bool {
        matches!(self, DgpKind::Cr | DgpKind::Scr)
    }

    fn correlated(self) -> bool {
        self != DgpKind::Ic
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IC" => Ok(DgpKind::Ic),
            "CC" => Ok(DgpKind::Cc),
            "CR" => Ok(DgpKind::Cr),
            "SCR" => Ok(DgpKind::Scr),
            other => Err(Error::Config(format!("unknown configuration {other:?}"))),
        }
    }
}

impl std::fmt::Display for DgpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DgpKind::Ic => "IC",
            DgpKind::Cc => "CC",
            DgpKind::Cr => "CR",
            DgpKind::Scr => "SCR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub kind: DgpKind,
    pub skus: usize,
    pub dcs: usize,
    pub seed: u64,
    pub instance: usize,
    /// Leading days simulated and discarded.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Days kept.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Trailing days simulated and discarded.
    #[serde(default = "default_burn_in")]
    pub tail: usize,
    #[serde(default = "default_lbar")]
    pub lbar: usize,
    /// Switch off every random innovation; streams stay at their means.
    #[serde(default)]
    pub noiseless: bool,
}

fn default_burn_in() -> usize {
    30
}
fn default_horizon() -> usize {
    300
}
fn default_lbar() -> usize {
    9
}

impl GenConfig {
    pub fn new(kind: DgpKind, skus: usize, dcs: usize, seed: u64, instance: usize) -> Self {
        Self {
            kind,
            skus,
            dcs,
            seed,
            instance,
            burn_in: default_burn_in(),
            horizon: default_horizon(),
            tail: default_burn_in(),
            lbar: default_lbar(),
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.skus == 0 || self.dcs == 0 || self.horizon == 0 || self.lbar == 0 {
            return Err(Error::Config(
                "skus, dcs, horizon and lbar must be positive".into(),
            ));
        }
        Ok(())
    }

    fn raw_len(&self) -> usize {
        self.burn_in + self.horizon + self.tail
    }

    /// Feature means, one draw from `U[0, 1]` per feature and instance.
    pub fn feature_means(&self) -> [f64; 4] {
        let mut rng = substream(self.seed, &[self.instance as u64, 0]);
        std::array::from_fn(|_| rng.random::<f64>())
    }
}

/// Record of how an instance was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMeta {
    pub config: GenConfig,
    pub feature_means: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
struct Ar1 {
    intercept: f64,
    phi: f64,
    sd: f64,
    init: f64,
}

impl Ar1 {
    fn path<R: Rng>(&self, rng: &mut R, len: usize, noiseless: bool) -> Vec<f64> {
        let sd = if noiseless { 0.0 } else { self.sd };
        let mut out = Vec::with_capacity(len);
        let mut x = self.init;
        for _ in 0..len {
            let e: f64 = rng.sample(StandardNormal);
            x = self.intercept + self.phi * x + sd * e;
            out.push(x);
        }
        out
    }

    fn mean(&self) -> f64 {
        self.intercept / (1.0 - self.phi)
    }

    fn sd(&self) -> f64 {
        self.sd / (1.0 - self.phi * self.phi).sqrt()
    }
}

fn feature_process(kind: DgpKind, mu: f64) -> Ar1 {
    if kind.correlated() {
        Ar1 {
            intercept: 0.2 * mu,
            phi: 0.8,
            sd: 0.36 * mu,
            init: mu,
        }
    } else {
        Ar1 {
            intercept: mu,
            phi: 0.0,
            sd: 0.6 * mu,
            init: mu,
        }
    }
}

fn noise_process(kind: DgpKind) -> Ar1 {
    if kind.correlated() {
        Ar1 {
            intercept: 0.0,
            phi: 0.8,
            sd: 0.6,
            init: 0.0,
        }
    } else {
        Ar1 {
            intercept: 0.0,
            phi: 0.0,
            sd: 1.0,
            init: 0.0,
        }
    }
}

const SHOCK: Ar1 = Ar1 {
    intercept: 0.0,
    phi: 0.8,
    sd: 1.0,
    init: 0.0,
};
const SHOCK_NOISE: Ar1 = Ar1 {
    intercept: 0.0,
    phi: 0.8,
    sd: 0.3,
    init: 0.0,
};
const LEAD: Ar1 = Ar1 {
    intercept: 0.6,
    phi: 0.8,
    sd: 1.0,
    init: 3.0,
};
const SHOCK_LEAD: Ar1 = Ar1 {
    intercept: 0.6,
    phi: 0.8,
    sd: 0.5,
    init: 3.0,
};
const CONSTANT_LEAD: f64 = 3.0;

/// Raw, unclipped streams before the burn-in is cut.
struct Streams {
    pair: Vec<Vec<f64>>,
    sku: Vec<Vec<f64>>,
    dc: Vec<Vec<f64>>,
    global: Vec<f64>,
    noise: Vec<Vec<f64>>,
    lead: Vec<Vec<f64>>,
}

const TAG_PAIR: u64 = 1;
const TAG_SKU: u64 = 2;
const TAG_DC: u64 = 3;
const TAG_GLOBAL: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_SHOCK: u64 = 6;
const TAG_LEAD: u64 = 7;

fn simulate_streams(gen: &GenConfig, mu: [f64; 4], len: usize) -> Streams {
    let inst = gen.instance as u64;
    let stream = |tag: u64, id: usize| substream(gen.seed, &[inst, tag, id as u64]);
    let n = gen.skus * gen.dcs;
    let pair = (0..n)
        .map(|p| {
            feature_process(gen.kind, mu[0]).path(&mut stream(TAG_PAIR, p), len, gen.noiseless)
        })
        .collect();
    let sku = (0..gen.skus)
        .map(|i| feature_process(gen.kind, mu[1]).path(&mut stream(TAG_SKU, i), len, gen.noiseless))
        .collect();
    let dc = (0..gen.dcs)
        .map(|j| feature_process(gen.kind, mu[2]).path(&mut stream(TAG_DC, j), len, gen.noiseless))
        .collect();
    let global =
        feature_process(gen.kind, mu[3]).path(&mut stream(TAG_GLOBAL, 0), len, gen.noiseless);

    let mut noise = Vec::with_capacity(n);
    let mut lead = Vec::with_capacity(n);
    for p in 0..n {
        let mut rn = stream(TAG_NOISE, p);
        let mut rl = stream(TAG_LEAD, p);
        match gen.kind {
            DgpKind::Ic | DgpKind::Cc => {
                noise.push(noise_process(gen.kind).path(&mut rn, len, gen.noiseless));
                lead.push(vec![CONSTANT_LEAD; len]);
            }
            DgpKind::Cr => {
                noise.push(noise_process(gen.kind).path(&mut rn, len, gen.noiseless));
                lead.push(LEAD.path(&mut rl, len, gen.noiseless));
            }
            DgpKind::Scr => {
                let s = SHOCK.path(&mut stream(TAG_SHOCK, p), len, gen.noiseless);
                let e = SHOCK_NOISE.path(&mut rn, len, gen.noiseless);
                let l = SHOCK_LEAD.path(&mut rl, len, gen.noiseless);
                noise.push(
                    e.iter()
                        .zip(&s)
                        .map(|(e, s)| e + 0.27f64.sqrt() * s)
                        .collect(),
                );
                lead.push(
                    l.iter()
                        .zip(&s)
                        .map(|(l, s)| l + 0.75f64.sqrt() * s)
                        .collect(),
                );
            }
        }
    }
    Streams {
        pair,
        sku,
        dc,
        global,
        noise,
        lead,
    }
}

pub fn mean_demand(x: [f64; 4]) -> f64 {
    (x[0] - 0.5).exp() + 2.0 * (x[1] + x[2] - 1.0).powi(2) + (x[3] - 0.5).abs()
}

pub fn gen_instance(gen: &GenConfig) -> Result<(ScenarioSet, GenMeta)> {
    gen.validate()?;
    let mu = gen.feature_means();
    let s = simulate_streams(gen, mu, gen.raw_len());
    let keep = gen.burn_in..gen.burn_in + gen.horizon;
    let mut products = Vec::with_capacity(gen.skus * gen.dcs);
    for i in 0..gen.skus {
        for j in 0..gen.dcs {
            let p = i * gen.dcs + j;
            let mut series = ProductSeries {
                sku: i,
                dc: j,
                demand: Vec::with_capacity(gen.horizon),
                leadtime: Vec::with_capacity(gen.horizon),
                covariates: Vec::with_capacity(gen.horizon),
            };
            for t in keep.clone() {
                let x = [s.pair[p][t], s.sku[i][t], s.dc[j][t], s.global[t]];
                series
                    .demand
                    .push((mean_demand(x) + s.noise[p][t]).max(0.0));
                let l = s.lead[p][t].floor().clamp(1.0, gen.lbar as f64) as usize;
                series.leadtime.push(Some(l));
                series.covariates.push(x);
            }
            products.push(series);
        }
    }
    let set = ScenarioSet {
        instance: gen.instance,
        skus: gen.skus,
        dcs: gen.dcs,
        products,
    };
    Ok((
        set,
        GenMeta {
            config: *gen,
            feature_means: mu,
        },
    ))
}

/// Empirical against analytic long-run moments of one stream family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMoments {
    pub stream: String,
    pub mean: f64,
    pub mean_ref: f64,
    pub sd: f64,
    pub sd_ref: f64,
    pub lag1: f64,
    pub lag1_ref: f64,
    /// Mean or sd off by more than the tolerance.
    pub flagged: bool,
}

fn pooled_moments(series: &[&[f64]]) -> (f64, f64, f64) {
    let n: usize = series.iter().map(|s| s.len()).sum();
    let mean = series.iter().flat_map(|s| s.iter()).sum::<f64>() / n as f64;
    let var = series
        .iter()
        .flat_map(|s| s.iter())
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let cov: f64 = series
        .iter()
        .flat_map(|s| s.windows(2))
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - series.len()) as f64;
    (mean, var.sqrt(), if var > 0.0 { cov / var } else { 0.0 })
}

/// Long-run mean, sd and lag-1 autocorrelation of every raw stream family
/// (features before demand is formed, noise and lead time before flooring),
/// pooled across products, over `len` days after the burn-in.
pub fn stationarity_report(gen: &GenConfig, len: usize, tol: f64) -> Result<Vec<StreamMoments>> {
    gen.validate()?;
    let mu = gen.feature_means();
    let s = simulate_streams(gen, mu, gen.burn_in + len);
    let b = gen.burn_in;
    fn cut(v: &[f64], b: usize) -> &[f64] {
        &v[b..]
    }
    let mut rows = Vec::new();
    let mut push = |name: &str, data: Vec<&[f64]>, r: (f64, f64, f64)| {
        let (mean, sd, lag1) = pooled_moments(&data);
        let scale = if r.0.abs() > 0.0 { r.0.abs() } else { r.1 };
        let flagged = (mean - r.0).abs() > tol * scale || (sd - r.1).abs() > tol * r.1;
        rows.push(StreamMoments {
            stream: name.to_string(),
            mean,
            mean_ref: r.0,
            sd,
            sd_ref: r.1,
            lag1,
            lag1_ref: r.2,
            flagged,
        });
    };
    let fref = |k: usize| {
        let p = feature_process(gen.kind, mu[k]);
        (p.mean(), p.sd(), p.phi)
    };
    push("x1", s.pair.iter().map(|v| cut(v, b)).collect(), fref(0));
    push("x2", s.sku.iter().map(|v| cut(v, b)).collect(), fref(1));
    push("x3", s.dc.iter().map(|v| cut(v, b)).collect(), fref(2));
    push("x4", vec![cut(&s.global, b)], fref(3));
    let noise_ref = if gen.kind.correlated() {
        (0.0, 1.0, 0.8)
    } else {
        (0.0, 1.0, 0.0)
    };
    push(
        "noise",
        s.noise.iter().map(|v| cut(v, b)).collect(),
        noise_ref,
    );
    if gen.kind.random_lead() {
        push(
            "lead",
            s.lead.iter().map(|v| cut(v, b)).collect(),
            (LEAD.mean(), LEAD.sd(), 0.8),
        );
    }
    Ok(rows)
}
