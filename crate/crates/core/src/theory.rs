//! Single-period newsvendor with an inventory input: learning the order map
//! over all bivariate polynomials versus the base-stock-shaped subclass
//! `v(x) - z`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::evaluation::{two_sample_t, TTest};
use crate::rng::substream;

/// Demand `D = slope * x + intercept + eps`, `x ~ U[x_lo, x_hi]`, inventory
/// `z ~ U[z_lo, z_hi]`, Gaussian noise redrawn until `D` lies in `[0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewsvendorWorld {
    pub slope: f64,
    pub intercept: f64,
    pub noise_sd: f64,
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
    pub d_max: f64,
    pub b: f64,
    pub h: f64,
    /// Hypotheses are clipped to `[-clip, clip]`.
    pub clip: f64,
}

impl Default for NewsvendorWorld {
    fn default() -> Self {
        Self {
            slope: 2.0,
            intercept: 1.0,
            noise_sd: 0.25,
            x_range: (0.0, 1.0),
            z_range: (0.0, 3.0),
            d_max: 5.0,
            b: 10.0,
            h: 1.0,
            clip: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub z: f64,
    pub d: f64,
}

fn std_normal() -> StatNormal {
    StatNormal::new(0.0, 1.0).expect("unit normal")
}

impl NewsvendorWorld {
    pub fn validate(&self) -> Result<()> {
        let ok = self.noise_sd > 0.0
            && self.b > 0.0
            && self.h > 0.0
            && self.clip > 0.0
            && self.d_max > 0.0
            && self.x_range.0 <= self.x_range.1
            && self.z_range.0 <= self.z_range.1;
        if !ok {
            return Err(Error::Config(format!("invalid newsvendor world {self:?}")));
        }
        let (lo, hi) = (
            self.mean_demand(self.x_range.0),
            self.mean_demand(self.x_range.1),
        );
        if lo.min(hi) < 0.0 || lo.max(hi) > self.d_max {
            return Err(Error::Config(
                "mean demand leaves [0, d_max] on the feature range".into(),
            ));
        }
        Ok(())
    }

    pub fn critical_ratio(&self) -> f64 {
        self.b / (self.b + self.h)
    }

    pub fn mean_demand(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Noise quantile at the critical ratio, ignoring the (negligible) truncation.
    pub fn optimal_offset(&self) -> f64 {
        self.noise_sd * std_normal().inverse_cdf(self.critical_ratio())
    }

    /// The globally optimal order `f(x) + offset - z`.
    pub fn optimal_order(&self, x: f64, z: f64) -> f64 {
        self.mean_demand(x) + self.optimal_offset() - z
    }

    /// Newsvendor optimum `(b + h) sd phi(Phi^-1(b / (b + h)))` for untruncated noise.
    pub fn optimal_risk(&self) -> f64 {
        let n = std_normal();
        (self.b + self.h) * self.noise_sd * n.pdf(n.inverse_cdf(self.critical_ratio()))
    }

    pub fn loss(&self, order: f64, z: f64, d: f64) -> f64 {
        let r = d - order - z;
        self.b * r.max(0.0) + self.h * (-r).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Observation> {
        let noise = Normal::new(0.0, self.noise_sd).expect("positive sd");
        (0..n)
            .map(|_| {
                let x = rng.random_range(self.x_range.0..=self.x_range.1);
                let z = rng.random_range(self.z_range.0..=self.z_range.1);
                let m = self.mean_demand(x);
                let d = loop {
                    let d = m + noise.sample(rng);
                    if (0.0..=self.d_max).contains(&d) {
                        break d;
                    }
                };
                Observation { x, z, d }
            })
            .collect()
    }

    pub fn risk(&self, f: &Hypothesis, data: &[Observation]) -> f64 {
        let s: f64 = data
            .iter()
            .map(|o| self.loss(f.order(o.x, o.z), o.z, o.d))
            .sum();
        s / data.len() as f64
    }

    pub fn optimal_empirical_risk(&self, data: &[Observation]) -> f64 {
        let s: f64 = data
            .iter()
            .map(|o| self.loss(self.optimal_order(o.x, o.z), o.z, o.d))
            .sum();
        s / data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisClass {
    /// `sum a_ij x^i z^j` over `i + j <= A`.
    Full,
    /// `sum a_k x^k - z` over `k <= A`.
    Constrained,
}

impl HypothesisClass {
    pub fn label(&self) -> &'static str {
        match self {
            HypothesisClass::Full => "full",
            HypothesisClass::Constrained => "constrained",
        }
    }
}

/// Exponents `(i, j)` of the full class, by total degree then by power of `z`.
pub fn monomials(degree: usize) -> Vec<(u32, u32)> {
    (0..=degree as u32)
        .flat_map(|t| (0..=t).map(move |j| (t - j, j)))
        .collect()
}

pub fn pseudo_dimension(class: HypothesisClass, degree: usize) -> usize {
    match class {
        HypothesisClass::Full => (degree + 2) * (degree + 1) / 2,
        HypothesisClass::Constrained => degree + 1,
    }
}

/// Sample size the constrained class needs, relative to the full class,
/// for a comparable generalisation bound.
pub fn sample_ratio(degree: usize) -> f64 {
    2.0 / (2.0 + degree as f64)
}

/// Uniform generalisation bound for a class of pseudo-dimension `dim`
/// with probability `1 - delta`.
pub fn generalization_bound(world: &NewsvendorWorld, dim: usize, n: usize, delta: f64) -> f64 {
    let (d, n) = (dim as f64, n as f64);
    let scale = world.b * world.d_max + world.h * world.clip;
    scale
        * ((2.0 * d * (std::f64::consts::E * n / d).ln() / n).sqrt()
            + ((1.0 / delta).ln() / (2.0 * n)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub class: HypothesisClass,
    pub degree: usize,
    /// Full: one per entry of `monomials(degree)`. Constrained: `a_0..a_A`.
    pub coef: Vec<f64>,
    pub clip: f64,
}

impl Hypothesis {
    pub fn new(class: HypothesisClass, degree: usize, coef: Vec<f64>, clip: f64) -> Result<Self> {
        let want = pseudo_dimension(class, degree);
        if coef.len() != want {
            return Err(Error::Dimension {
                expected: want,
                actual: coef.len(),
            });
        }
        Ok(Self {
            class,
            degree,
            coef,
            clip,
        })
    }

    pub fn raw(&self, x: f64, z: f64) -> f64 {
        match self.class {
            HypothesisClass::Full => monomials(self.degree)
                .iter()
                .zip(&self.coef)
                .map(|(&(i, j), a)| a * x.powi(i as i32) * z.powi(j as i32))
                .sum(),
            HypothesisClass::Constrained => {
                self.coef.iter().rev().fold(0.0, |acc, a| acc * x + a) - z
            }
        }
    }

    pub fn order(&self, x: f64, z: f64) -> f64 {
        self.raw(x, z).clamp(-self.clip, self.clip)
    }

    /// The same function written in the full-class basis.
    pub fn as_full(&self) -> Hypothesis {
        match self.class {
            HypothesisClass::Full => self.clone(),
            HypothesisClass::Constrained => {
                let coef = monomials(self.degree)
                    .iter()
                    .map(|&(i, j)| match (i, j) {
                        (i, 0) => self.coef[i as usize],
                        (0, 1) => -1.0,
                        _ => 0.0,
                    })
                    .collect();
                Hypothesis {
                    class: HypothesisClass::Full,
                    degree: self.degree,
                    coef,
                    clip: self.clip,
                }
            }
        }
    }

    /// `f(x, c) + c - z`, which always has the constrained form.
    pub fn fix_and_shift(&self, c: f64) -> Hypothesis {
        let full = self.as_full();
        let mut v = vec![0.0; self.degree + 1];
        for (&(i, j), a) in monomials(self.degree).iter().zip(&full.coef) {
            v[i as usize] += a * c.powi(j as i32);
        }
        v[0] += c;
        Hypothesis {
            class: HypothesisClass::Constrained,
            degree: self.degree,
            coef: v,
            clip: self.clip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmConfig {
    /// Perturbation levels of the smoothed check loss, largest first.
    pub eps_schedule: [f64; 4],
    /// Stop an inner loop once the relative objective change drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self {
            eps_schedule: [1e-2, 1e-4, 1e-6, 1e-8],
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmFit {
    pub hypothesis: Hypothesis,
    pub empirical_risk: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_loss(r: f64, tau: f64) -> f64 {
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

/// Linear quantile regression of `y` on the columns of `a` by
/// majorise-minimise on the perturbed check loss
/// `rho(r) - (eps / 2) ln(eps + |r|)`; each step is a weighted least-squares solve.
fn quantile_regression(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    cfg: &ErmConfig,
) -> Result<(DVector<f64>, usize, bool)> {
    let (n, p) = a.shape();
    let ones = DVector::from_element(n, 1.0);
    let shift = a.transpose() * &ones * (2.0 * tau - 1.0);
    let objective = |beta: &DVector<f64>| -> f64 {
        (y - a * beta)
            .iter()
            .map(|&r| check_loss(r, tau))
            .sum::<f64>()
            / n as f64
    };
    // Least-squares start.
    let gram = a.transpose() * a + DMatrix::identity(p, p) * 1e-12;
    let mut beta = solve(gram, a.transpose() * y)?;
    let scale = y.iter().map(|v| v.abs()).sum::<f64>() / n as f64 + 1.0;
    let mut iterations = 0;
    let mut converged = false;
    for &eps in &cfg.eps_schedule {
        let eps = eps * scale;
        let smoothed = |beta: &DVector<f64>| -> f64 {
            (y - a * beta)
                .iter()
                .map(|&r| check_loss(r, tau) - 0.5 * eps * (eps + r.abs()).ln())
                .sum::<f64>()
                / n as f64
        };
        let mut prev = smoothed(&beta);
        converged = false;
        for _ in 0..cfg.max_iter {
            iterations += 1;
            let r = y - a * &beta;
            let w = r.map(|v| 1.0 / (eps + v.abs()));
            let mut aw = a.clone();
            for (i, mut row) in aw.row_iter_mut().enumerate() {
                row *= w[i];
            }
            let lhs = a.transpose() * &aw;
            let rhs = aw.transpose() * y + &shift;
            beta = solve(lhs, rhs)?;
            let cur = smoothed(&beta);
            let done = (prev - cur).abs() <= cfg.tol * (prev.abs() + 1e-12) * 1e-4;
            prev = cur;
            if done {
                converged = true;
                break;
            }
        }
    }
    if !objective(&beta).is_finite() {
        return Err(Error::Numerical("quantile regression diverged".into()));
    }
    Ok((beta, iterations, converged))
}

fn solve(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.solve(&rhs));
    }
    m.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular normal equations".into()))
}

/// Empirical risk minimiser over the chosen class.
pub fn erm(
    world: &NewsvendorWorld,
    data: &[Observation],
    class: HypothesisClass,
    degree: usize,
    cfg: &ErmConfig,
) -> Result<ErmFit> {
    let p = pseudo_dimension(class, degree);
    if data.len() <= p {
        return Err(Error::ShortWindow {
            needed: p + 1,
            available: data.len(),
        });
    }
    let basis = monomials(degree);
    let (a, y) = match class {
        HypothesisClass::Full => (
            DMatrix::from_fn(data.len(), p, |r, c| {
                let (i, j) = basis[c];
                data[r].x.powi(i as i32) * data[r].z.powi(j as i32)
            }),
            DVector::from_iterator(data.len(), data.iter().map(|o| o.d - o.z)),
        ),
        HypothesisClass::Constrained => (
            DMatrix::from_fn(data.len(), p, |r, c| data[r].x.powi(c as i32)),
            DVector::from_iterator(data.len(), data.iter().map(|o| o.d)),
        ),
    };
    let (beta, iterations, converged) = quantile_regression(&a, &y, world.critical_ratio(), cfg)?;
    let hypothesis = Hypothesis::new(class, degree, beta.iter().copied().collect(), world.clip)?;
    Ok(ErmFit {
        empirical_risk: world.risk(&hypothesis, data),
        hypothesis,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcessRiskConfig {
    pub degree: usize,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub test_size: usize,
    pub seed: u64,
    pub erm: ErmConfig,
}

impl Default for ExcessRiskConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            n_grid: vec![20, 50, 100, 200, 500, 1000],
            seeds: 100,
            test_size: 100_000,
            seed: 0,
            erm: ErmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurvePoint {
    pub n: usize,
    pub class: HypothesisClass,
    pub mean_risk: f64,
    pub sd_risk: f64,
    pub mean_excess: f64,
    pub sd_excess: f64,
    /// Test risk per seed.
    pub risks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskReport {
    pub degree: usize,
    /// Monte-Carlo risk of the optimal policy on the shared test draws.
    pub optimal_risk: f64,
    pub analytic_optimal_risk: f64,
    pub sample_ratio: f64,
    pub points: Vec<RiskCurvePoint>,
}

impl ExcessRiskReport {
    pub fn point(&self, n: usize, class: HypothesisClass) -> Option<&RiskCurvePoint> {
        self.points.iter().find(|p| p.n == n && p.class == class)
    }

    /// One-sided Welch test of `H0: risk(full) <= risk(constrained)` at `n`.
    pub fn dominance_test(&self, n: usize) -> Result<TTest> {
        let get = |c| {
            self.point(n, c)
                .ok_or(Error::Empty("no risk curve at that sample size"))
        };
        two_sample_t(
            &get(HypothesisClass::Full)?.risks,
            &get(HypothesisClass::Constrained)?.risks,
        )
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Fit both classes on `seeds` independent training sets per sample size
/// and score them on one shared set of fresh test draws.
pub fn excess_risk_experiment(
    world: &NewsvendorWorld,
    cfg: &ExcessRiskConfig,
) -> Result<ExcessRiskReport> {
    world.validate()?;
    if cfg.seeds == 0 || cfg.test_size == 0 {
        return Err(Error::Empty("experiment needs seeds and test draws"));
    }
    let test = world.sample(cfg.test_size, &mut substream(cfg.seed, &[u64::MAX]));
    let optimal = world.optimal_empirical_risk(&test);
    let mut points = Vec::new();
    for &n in &cfg.n_grid {
        let fits = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| {
                let train = world.sample(n, &mut substream(cfg.seed, &[n as u64, s as u64]));
                let mut out = [0.0; 2];
                for (k, class) in [HypothesisClass::Full, HypothesisClass::Constrained]
                    .into_iter()
                    .enumerate()
                {
                    let fit = erm(world, &train, class, cfg.degree, &cfg.erm)?;
                    out[k] = world.risk(&fit.hypothesis, &test);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, class) in [HypothesisClass::Full, HypothesisClass::Constrained]
            .into_iter()
            .enumerate()
        {
            let risks: Vec<f64> = fits.iter().map(|f| f[k]).collect();
            let excess: Vec<f64> = risks.iter().map(|r| r - optimal).collect();
            let (mean_risk, sd_risk) = mean_sd(&risks);
            let (mean_excess, sd_excess) = mean_sd(&excess);
            points.push(RiskCurvePoint {
                n,
                class,
                mean_risk,
                sd_risk,
                mean_excess,
                sd_excess,
                risks,
            });
        }
    }
    Ok(ExcessRiskReport {
        degree: cfg.degree,
        optimal_risk: optimal,
        analytic_optimal_risk: world.optimal_risk(),
        sample_ratio: sample_ratio(cfg.degree),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_basis_of_degree_two() {
        assert_eq!(
            monomials(2),
            vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        );
        assert_eq!(pseudo_dimension(HypothesisClass::Full, 2), 6);
        assert_eq!(pseudo_dimension(HypothesisClass::Constrained, 2), 3);
        assert_eq!(sample_ratio(2), 0.5);
    }

    #[test]
    fn standard_normal_offset() {
        let w = NewsvendorWorld {
            noise_sd: 1.0,
            ..NewsvendorWorld::default()
        };
        assert!((w.optimal_offset() - 1.3352).abs() < 1e-3);
    }

    #[test]
    fn constrained_as_full_agrees() {
        let h =
            Hypothesis::new(HypothesisClass::Constrained, 2, vec![1.0, -0.5, 0.25], 20.0).unwrap();
        let f = h.as_full();
        for &(x, z) in &[(0.3, 1.2), (-2.0, 0.5), (1.7, -3.0)] {
            assert!((h.order(x, z) - f.order(x, z)).abs() < 1e-12);
        }
    }
}
