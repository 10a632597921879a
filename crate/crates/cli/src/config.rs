use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use perishlab::datagen::{DgpKind, GenConfig};
use perishlab::e2e::{BoostConfig, TrainConfig};
use perishlab::experiment::LambdaGrid;
use perishlab::pto::{DEFAULT_RIDGE, DEFAULT_SCENARIOS};
use perishlab::rng::derive_seed;
use perishlab::theory::{ExcessRiskConfig, NewsvendorWorld};
use perishlab::{CostParams, SystemConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "benchmark")]
    Benchmark,
    #[serde(rename = "e2e-bb")]
    E2eBb,
    #[serde(rename = "e2e-pil")]
    E2ePil,
    #[serde(rename = "e2e-bpil")]
    E2eBpil,
    #[serde(rename = "pto-pb")]
    PtoPb,
    #[serde(rename = "pto-ppb")]
    PtoPpb,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Benchmark,
        PolicyKind::E2eBb,
        PolicyKind::E2ePil,
        PolicyKind::E2eBpil,
        PolicyKind::PtoPb,
        PolicyKind::PtoPpb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Benchmark => "benchmark",
            PolicyKind::E2eBb => "e2e-bb",
            PolicyKind::E2ePil => "e2e-pil",
            PolicyKind::E2eBpil => "e2e-bpil",
            PolicyKind::PtoPb => "pto-pb",
            PolicyKind::PtoPpb => "pto-ppb",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PolicyKind::ALL.iter().map(|p| p.name()).collect();
                format!("unknown policy `{s}`, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dgp: DgpKind,
    pub skus: usize,
    pub dcs: usize,
    pub instances: usize,
    pub burn_in: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dgp: DgpKind::Scr,
            skus: 10,
            dcs: 10,
            instances: 5,
            burn_in: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtoConfig {
    /// L2 penalty of the linear forecasters.
    pub ridge: f64,
    /// Scenarios drawn per ordering decision.
    pub scenarios: usize,
}

impl Default for PtoConfig {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            scenarios: DEFAULT_SCENARIOS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub world: NewsvendorWorld,
    pub experiment: ExcessRiskConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Not part of the hashed configuration; outputs do not depend on it.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub system: SystemConfig,
    pub costs: CostParams,
    pub data: DataConfig,
    pub policies: Vec<PolicyKind>,
    pub train: TrainConfig,
    /// `null` trains once with the weights in `train`.
    pub tune: Option<LambdaGrid>,
    pub boost: BoostConfig,
    pub pto: PtoConfig,
    pub theory: TheoryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("out"),
            system: SystemConfig::default(),
            costs: CostParams::default(),
            data: DataConfig::default(),
            policies: PolicyKind::ALL.to_vec(),
            train: TrainConfig::default(),
            tune: Some(LambdaGrid::default()),
            boost: BoostConfig::default(),
            pto: PtoConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.costs.validate()?;
        self.train.validate()?;
        self.theory.world.validate()?;
        if self.data.skus == 0 || self.data.dcs == 0 || self.data.instances == 0 {
            bail!("data.skus, data.dcs and data.instances must be positive");
        }
        if self.policies.is_empty() {
            bail!("policies must not be empty");
        }
        if !(self.pto.ridge.is_finite() && self.pto.ridge >= 0.0) || self.pto.scenarios == 0 {
            bail!("pto.ridge must be >= 0 and pto.scenarios positive");
        }
        Ok(())
    }

    pub fn gen_config(&self, instance: usize) -> GenConfig {
        let mut g = GenConfig::new(
            self.data.dgp,
            self.data.skus,
            self.data.dcs,
            self.seed,
            instance,
        );
        g.burn_in = self.data.burn_in;
        g.tail = self.data.burn_in;
        g.horizon = self.system.horizon();
        g.lbar = self.system.lbar;
        g
    }

    pub fn train_seed(&self, instance: usize) -> u64 {
        derive_seed(self.seed, &[1, instance as u64])
    }

    pub fn pto_seed(&self, instance: usize) -> u64 {
        derive_seed(self.seed, &[2, instance as u64])
    }

    pub fn canonical_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?)))
    }

    pub fn wants(&self, kind: PolicyKind) -> bool {
        self.policies.contains(&kind)
    }

    /// Set one scalar parameter by its sweep name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let int = || -> Result<usize> {
            if value.fract() != 0.0 || value < 1.0 {
                bail!("{name} needs a positive integer, got {value}");
            }
            Ok(value as usize)
        };
        match name {
            "K" | "k" => self.system.k = int()?,
            "R" | "r" => self.system.r = int()?,
            "Lbar" | "lbar" => self.system.lbar = int()?,
            "h" => self.costs.h = value,
            "b" => self.costs.b = value,
            "theta" => self.costs.theta = value,
            _ => bail!("cannot vary `{name}`; expected K, R, Lbar, h, b or theta"),
        }
        Ok(())
    }
}
