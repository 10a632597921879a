use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-unit cost rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Holding cost per unit left over at the end of a period.
    pub h: f64,
    /// Backorder cost per unit of unmet demand per period.
    pub b: f64,
    /// Outdating cost per expired unit.
    pub theta: f64,
}

impl CostParams {
    pub fn new(h: f64, b: f64, theta: f64) -> Result<Self> {
        let p = Self { h, b, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("b", self.b), ("theta", self.theta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "cost {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `b / (b + h)`
    pub fn critical_ratio(&self) -> f64 {
        self.b / (self.b + self.h)
    }
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            h: 1.0,
            b: 10.0,
            theta: 10.0,
        }
    }
}

/// Lifetime, lead-time bound, ordering interval and horizon split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Product lifetime in periods.
    pub k: usize,
    /// Upper bound on lead times.
    pub lbar: usize,
    /// Periods between consecutive orders.
    pub r: usize,
    pub t_in: usize,
    pub t_out: usize,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.lbar == 0 || self.r == 0 {
            return Err(Error::Config(format!(
                "k, lbar and r must be at least 1 (k={}, lbar={}, r={})",
                self.k, self.lbar, self.r
            )));
        }
        Ok(())
    }

    /// Length of the inventory state vector, `K + Lbar - 1`.
    pub fn state_dim(&self) -> usize {
        self.k + self.lbar - 1
    }

    /// Length of the future demand window an order can affect, `K + Lbar`.
    pub fn demand_window(&self) -> usize {
        self.k + self.lbar
    }

    pub fn horizon(&self) -> usize {
        self.t_in + self.t_out
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            k: 7,
            lbar: 9,
            r: 4,
            t_in: 200,
            t_out: 100,
        }
    }
}
