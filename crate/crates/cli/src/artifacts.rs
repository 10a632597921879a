use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Output directory that remembers every file written through it.
pub struct Artifacts {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: BTreeMap<String, u64>,
    args: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written
            .insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn write_csv<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.write(rel, &bytes)
    }

    pub fn read(&self, rel: &str, hint: &str) -> Result<Vec<u8>> {
        let path = self.path(rel);
        if !path.exists() {
            bail!("missing artifact {}; run `{hint}` first", path.display());
        }
        fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }

    pub fn read_string(&self, rel: &str, hint: &str) -> Result<String> {
        String::from_utf8(self.read(rel, hint)?)
            .with_context(|| format!("{rel} is not valid UTF-8"))
    }

    /// Record the run in `manifest/<command>.json`.
    pub fn finish(
        mut self,
        command: &str,
        cfg: &RunConfig,
        args: &BTreeMap<String, String>,
    ) -> Result<BTreeMap<String, String>> {
        let mut seeds = BTreeMap::new();
        seeds.insert("master".to_string(), cfg.seed);
        for i in 0..cfg.data.instances {
            seeds.insert(format!("train/instance_{i}"), cfg.train_seed(i));
            seeds.insert(format!("pto/instance_{i}"), cfg.pto_seed(i));
        }
        let outputs = std::mem::take(&mut self.written);
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: cfg.hash()?,
            config: cfg,
            seeds,
            args,
            outputs: &outputs,
        };
        self.write_json(&format!("manifest/{command}.json"), &manifest)?;
        Ok(outputs)
    }
}

pub fn data_file(instance: usize) -> String {
    format!("data/instance_{instance}.csv")
}

pub fn meta_file(instance: usize) -> String {
    format!("data/instance_{instance}.json")
}

pub fn model_file(instance: usize, name: &str) -> String {
    format!("models/instance_{instance}/{name}.json")
}
