//! Perishable inventory control with random lead times.
//!
//! The crate covers the exact system dynamics, per-order marginal cost
//! accounting, projected-inventory computations, heuristic policies,
//! end-to-end learned policies, a predict-then-optimise baseline, synthetic
//! data generation, out-of-sample evaluation and a small newsvendor theory
//! experiment.

pub mod accounting;
pub mod checks;
pub mod config;
pub mod data;
pub mod datagen;
pub mod dynamics;
pub mod e2e;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod heuristics;
pub mod poi;
pub mod policy;
pub mod pto;
pub mod rng;
pub mod theory;

pub use config::{CostParams, SystemConfig};
pub use dynamics::{rollout, transition, InventoryState, OrderEvent, PeriodCost, Trajectory};
pub use error::{Error, Result};
