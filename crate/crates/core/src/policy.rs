use crate::config::{CostParams, SystemConfig};
use crate::data::{ProductSeries, ScenarioSet};
use crate::dynamics::{rollout, InventoryState, Trajectory};
use crate::error::{Error, Result};
use crate::features::{benchmark_parts, benchmark_value, FeatureSpec};

/// What a policy sees when it places an order.
#[derive(Debug, Clone, Copy)]
pub struct Decision<'a> {
    pub set: &'a ScenarioSet,
    pub product: usize,
    pub day: usize,
    pub state: &'a InventoryState,
}

impl Decision<'_> {
    pub fn series(&self) -> &ProductSeries {
        &self.set.products[self.product]
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn order(&self, d: &Decision) -> Result<f64>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        (**self).order(d)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn name(&self) -> String {
        (**self).name()
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        (**self).order(d)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn name(&self) -> String {
        format!("constant-{}", self.0)
    }
    fn order(&self, _: &Decision) -> Result<f64> {
        Ok(self.0)
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub String, pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&Decision) -> Result<f64> + Send + Sync,
{
    fn name(&self) -> String {
        self.0.clone()
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        (self.1)(d)
    }
}

/// Demand quantile times mean past lead time, ignoring the state.
#[derive(Debug, Clone, Copy)]
pub struct QuantileBenchmark {
    pub tau: f64,
    pub r: usize,
}

impl QuantileBenchmark {
    pub fn new(spec: &FeatureSpec, config: &SystemConfig) -> Self {
        Self {
            tau: spec.tau,
            r: config.r,
        }
    }
}

impl Policy for QuantileBenchmark {
    fn name(&self) -> String {
        "benchmark".into()
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        benchmark_value(d.series(), d.day, self.r, self.tau)
    }
}

/// Raises the inventory position to the benchmark quantile times the mean
/// lead time plus one review period.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkOrderUpTo {
    pub tau: f64,
    pub r: usize,
}

impl BenchmarkOrderUpTo {
    pub fn new(spec: &FeatureSpec, config: &SystemConfig) -> Self {
        Self {
            tau: spec.tau,
            r: config.r,
        }
    }

    pub fn level(&self, series: &ProductSeries, day: usize) -> Result<f64> {
        let (q, lead) = benchmark_parts(series, day, self.r, self.tau)?;
        Ok(q * (lead + self.r as f64))
    }
}

impl Policy for BenchmarkOrderUpTo {
    fn name(&self) -> String {
        "benchmark-order-up-to".into()
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        Ok((self.level(d.series(), d.day)? - d.state.position()).max(0.0))
    }
}

/// Multiplies another policy's order by a fixed factor.
#[derive(Debug, Clone)]
pub struct Scaled<P> {
    pub base: P,
    pub gamma: f64,
}

impl<P: Policy> Policy for Scaled<P> {
    fn name(&self) -> String {
        format!("{}x{}", self.base.name(), self.gamma)
    }
    fn order(&self, d: &Decision) -> Result<f64> {
        Ok(self.gamma * self.base.order(d)?)
    }
}

/// Simulated days `[start, end)` with orders every `interval` days from `first_epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathWindow {
    pub start: usize,
    pub end: usize,
    pub first_epoch: usize,
    pub interval: usize,
}

impl PathWindow {
    /// The `R` shifted paths over `[start, end)`.
    pub fn shifted(start: usize, end: usize, r: usize) -> Vec<PathWindow> {
        (0..r)
            .map(|i| PathWindow {
                start,
                end,
                first_epoch: start + i,
                interval: r,
            })
            .collect()
    }

    pub fn out_of_sample(config: &SystemConfig) -> Vec<PathWindow> {
        Self::shifted(config.t_in, config.horizon(), config.r)
    }

    pub fn in_sample(config: &SystemConfig, spec: &FeatureSpec) -> Vec<PathWindow> {
        Self::shifted(spec.warmup(config.r), config.t_in, config.r)
    }

    pub fn is_epoch(&self, day: usize) -> bool {
        day >= self.first_epoch && (day - self.first_epoch).is_multiple_of(self.interval)
    }
}

/// Run `policy` on one product along one path, starting from `initial`.
pub fn simulate<P: Policy + ?Sized>(
    policy: &P,
    set: &ScenarioSet,
    product: usize,
    window: PathWindow,
    params: &CostParams,
    initial: InventoryState,
) -> Result<Trajectory> {
    let series = &set.products[product];
    if window.end > series.len() || window.start >= window.end {
        return Err(Error::Config(format!(
            "path [{}, {}) outside a {}-day series",
            window.start,
            window.end,
            series.len()
        )));
    }
    rollout(
        initial,
        &series.demand[window.start..window.end],
        params,
        |t, state| {
            let day = window.start + t;
            if !window.is_epoch(day) {
                return Ok(None);
            }
            let q = policy.order(&Decision {
                set,
                product,
                day,
                state,
            })?;
            let lead = series.leadtime[day].ok_or(Error::MissingLeadTime(day))?;
            Ok(Some((q, lead)))
        },
    )
}
