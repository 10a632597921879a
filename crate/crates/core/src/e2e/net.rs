use perishlab_autodiff::{Checkpoint, Graph, Mlp, OutputTransform, Plain};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Standardizer};
use crate::poi::{smoothed_poi_graph, PoiConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// Maps features and state straight to an order quantity.
    BlackBox,
    /// Predicts an order-up-to level and orders up to it from the projected
    /// on-hand inventory at arrival.
    Pil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiddenSizes {
    pub demand: usize,
    pub lead: usize,
    pub decision: usize,
}

impl Default for HiddenSizes {
    fn default() -> Self {
        Self {
            demand: 32,
            lead: 16,
            decision: 64,
        }
    }
}

/// Everything about a network except its parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub kind: NetKind,
    pub system: SystemConfig,
    pub features: FeatureSpec,
    pub hidden: HiddenSizes,
    pub poi: PoiConfig,
    pub inputs: Standardizer,
    /// Demand quantities are divided by this inside the network.
    pub demand_scale: f64,
}

impl NetArch {
    fn modules(&self) -> [(&'static str, Mlp); 5] {
        let p = self.features.dim();
        let h = self.hidden;
        let sys = &self.system;
        let decision_in = match self.kind {
            NetKind::BlackBox => h.demand + h.lead + sys.state_dim(),
            NetKind::Pil => h.demand + h.lead,
        };
        let decision_out = match self.kind {
            NetKind::BlackBox => OutputTransform::Softplus,
            NetKind::Pil => OutputTransform::Identity,
        };
        let mlp = |sizes: Vec<usize>, out| Mlp::new(sizes, out).expect("non-zero layer sizes");
        [
            (
                "demand_trunk",
                mlp(vec![p, h.demand], OutputTransform::Relu),
            ),
            (
                "demand_head",
                mlp(
                    vec![h.demand, sys.demand_window()],
                    OutputTransform::Identity,
                ),
            ),
            ("lead_trunk", mlp(vec![p, h.lead], OutputTransform::Relu)),
            ("lead_head", mlp(vec![h.lead, 2], OutputTransform::Identity)),
            (
                "decision",
                mlp(vec![decision_in, h.decision, 1], decision_out),
            ),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.modules().iter().map(|(_, m)| m.param_count()).sum()
    }
}

/// Network outputs in scaled demand units.
#[derive(Debug, Clone)]
pub struct NetOutput<V> {
    pub demand: Vec<V>,
    pub lead: Vec<V>,
    pub q: V,
    /// Order-up-to level and projected on-hand path, for the structured net.
    pub target: Option<V>,
    pub poi: Option<Vec<V>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eNet {
    pub arch: NetArch,
    pub params: Vec<f64>,
}

impl E2eNet {
    pub fn new(arch: NetArch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Dimension {
                expected: arch.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    /// Random weights; output layers start small so each head begins near
    /// its bias, which is set from the given starting values.
    pub fn init<R: Rng>(
        arch: NetArch,
        rng: &mut R,
        demand_bias: f64,
        lead_bias: [f64; 2],
        decision_bias: f64,
    ) -> Self {
        let mut params = Vec::with_capacity(arch.param_count());
        for (name, m) in arch.modules() {
            let mut v = m.init(rng);
            let last = m.layers() - 1;
            let b = m.bias_offset(last);
            let w0 = b - m.sizes[last] * m.sizes[last + 1];
            if name != "demand_trunk" && name != "lead_trunk" {
                v[w0..b].iter_mut().for_each(|w| *w *= 0.1);
            }
            match name {
                "demand_head" => v[b..].iter_mut().for_each(|x| *x = demand_bias),
                "lead_head" => v[b..].copy_from_slice(&lead_bias),
                "decision" => v[b] = decision_bias,
                _ => {}
            }
            params.extend(v);
        }
        Self { arch, params }
    }

    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::V],
        x: &[G::V],
        z: &[f64],
    ) -> Result<NetOutput<G::V>> {
        let [dt, dh, lt, lh, dec] = self.arch.modules();
        let mut off = 0;
        let mut slice = |m: &Mlp| {
            let s = &params[off..off + m.param_count()];
            off += m.param_count();
            s
        };
        let (pdt, pdh, plt, plh, pdec) = (
            slice(&dt.1),
            slice(&dh.1),
            slice(&lt.1),
            slice(&lh.1),
            slice(&dec.1),
        );
        let hd = dt.1.forward(g, pdt, x)?;
        let demand = dh.1.forward(g, pdh, &hd)?;
        let hl = lt.1.forward(g, plt, x)?;
        let lead = lh.1.forward(g, plh, &hl)?;
        let mut inner = hd;
        inner.extend_from_slice(&hl);
        match self.arch.kind {
            NetKind::BlackBox => {
                for &v in z {
                    inner.push(g.constant(v));
                }
                let q = dec.1.forward(g, pdec, &inner)?[0];
                Ok(NetOutput {
                    demand,
                    lead,
                    q,
                    target: None,
                    poi: None,
                })
            }
            NetKind::Pil => {
                let s = dec.1.forward(g, pdec, &inner)?[0];
                let k = self.arch.system.k;
                let poi = smoothed_poi_graph(g, z, k, &demand, lead[0], &self.arch.poi)?;
                let gap = g.sub(s, poi[0]);
                let q = g.relu(gap);
                Ok(NetOutput {
                    demand,
                    lead,
                    q,
                    target: Some(s),
                    poi: Some(poi),
                })
            }
        }
    }

    /// Order quantity in original units for raw features `x` and state levels `z`.
    pub fn decide(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let out = self.evaluate(x, z)?;
        Ok(out.q * self.arch.demand_scale)
    }

    /// Plain forward pass from raw inputs; outputs in scaled units.
    pub fn evaluate(&self, x: &[f64], z: &[f64]) -> Result<NetOutput<f64>> {
        let xs = self.arch.inputs.apply(x);
        let zs: Vec<f64> = z.iter().map(|v| v / self.arch.demand_scale).collect();
        self.forward(&mut Plain, &self.params, &xs, &zs)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<NetArch> {
        let mut c = Checkpoint::new(self.arch.clone());
        let mut off = 0;
        for (name, m) in self.arch.modules() {
            let n = m.param_count();
            c.push(name, vec![n], self.params[off..off + n].to_vec());
            off += n;
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint<NetArch>) -> Result<Self> {
        let mut params = Vec::with_capacity(c.architecture.param_count());
        for (name, m) in c.architecture.modules() {
            params.extend_from_slice(c.take(name, m.param_count())?);
        }
        Self::new(c.architecture.clone(), params)
    }
}
