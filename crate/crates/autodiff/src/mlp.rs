use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;
use crate::graph::{Graph, Plain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    #[default]
    Identity,
    Relu,
    /// `ln(1 + e^x)`, keeps outputs strictly positive.
    Softplus,
}

/// Fully connected network with rectifier activations between layers.
///
/// Parameters live in one flat slice: for each layer, a row-major
/// `out x in` weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub output: OutputTransform,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, output: OutputTransform) -> Result<Self, AutodiffError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(AutodiffError::Architecture(format!(
                "need at least two non-zero layer sizes, got {sizes:?}"
            )));
        }
        Ok(Self { sizes, output })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                out.push(rng.random_range(-bound..bound));
            }
            out.extend(std::iter::repeat_n(0.0, fan_out));
        }
        out
    }

    /// Offset of layer `l`'s bias block within the flat parameter slice.
    pub fn bias_offset(&self, layer: usize) -> usize {
        let before: usize = self
            .sizes
            .windows(2)
            .take(layer)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        before + self.sizes[layer] * self.sizes[layer + 1]
    }

    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::V],
        input: &[G::V],
    ) -> Result<Vec<G::V>, AutodiffError> {
        if params.len() != self.param_count() {
            return Err(AutodiffError::ShapeMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        if input.len() != self.input_dim() {
            return Err(AutodiffError::ShapeMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut h: Vec<G::V> = input.to_vec();
        let mut off = 0;
        let last = self.layers() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let biases = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let pre = g.dot(row, &h);
                let pre = g.add(pre, biases[j]);
                let act = if l < last {
                    g.relu(pre)
                } else {
                    match self.output {
                        OutputTransform::Identity => pre,
                        OutputTransform::Relu => g.relu(pre),
                        OutputTransform::Softplus => g.softplus(pre),
                    }
                };
                next.push(act);
            }
            h = next;
        }
        Ok(h)
    }
}

/// An architecture together with concrete parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub arch: Mlp,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn new(arch: Mlp, values: Vec<f64>) -> Result<Self, AutodiffError> {
        if values.len() != arch.param_count() {
            return Err(AutodiffError::ShapeMismatch {
                expected: arch.param_count(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                node: i,
                value: values[i],
            });
        }
        Ok(Self { arch, values })
    }

    /// Weight matrix (row-major) and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let b = self.arch.bias_offset(l);
        let n_in = self.arch.sizes[l];
        let n_out = self.arch.sizes[l + 1];
        (
            &self.values[b - n_in * n_out..b],
            &self.values[b..b + n_out],
        )
    }
}

pub fn mlp_apply(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>, AutodiffError> {
    params.arch.forward(&mut Plain, &params.values, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::tape_eval_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let arch = Mlp::new(vec![3, 3], OutputTransform::Identity).unwrap();
        let mut values = vec![0.0; arch.param_count()];
        for i in 0..3 {
            values[i * 3 + i] = 1.0;
        }
        let p = MlpParams::new(arch, values).unwrap();
        assert_eq!(
            mlp_apply(&p, &[1.5, -2.0, 0.25]).unwrap(),
            vec![1.5, -2.0, 0.25]
        );
    }

    #[test]
    fn zero_weights_output_bias() {
        let arch = Mlp::new(vec![2, 2], OutputTransform::Identity).unwrap();
        let mut values = vec![0.0; arch.param_count()];
        values[4] = 0.5;
        values[5] = -3.0;
        let p = MlpParams::new(arch, values).unwrap();
        assert_eq!(mlp_apply(&p, &[9.0, 9.0]).unwrap(), vec![0.5, -3.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let arch = Mlp::new(vec![2, 4, 1], OutputTransform::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::new(arch.clone(), arch.init(&mut rng)).unwrap();
        assert!(matches!(
            mlp_apply(&p, &[1.0]),
            Err(AutodiffError::ShapeMismatch {
                expected: 2,
                actual: 1
            })
        ));
        assert!(MlpParams::new(arch, vec![0.0; 3]).is_err());
    }

    #[test]
    fn layer_accessor_matches_layout() {
        let arch = Mlp::new(vec![2, 3, 1], OutputTransform::Identity).unwrap();
        let values: Vec<f64> = (0..arch.param_count()).map(|i| i as f64).collect();
        let p = MlpParams::new(arch, values).unwrap();
        let (w0, b0) = p.layer(0);
        assert_eq!(w0, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(b0, &[6.0, 7.0, 8.0]);
        let (w1, b1) = p.layer(1);
        assert_eq!(w1, &[9.0, 10.0, 11.0]);
        assert_eq!(b1, &[12.0]);
    }

    #[test]
    fn softplus_head_is_positive() {
        let arch = Mlp::new(vec![3, 8, 1], OutputTransform::Softplus).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MlpParams::new(arch.clone(), arch.init(&mut rng)).unwrap();
        for x in [-50.0, -1.0, 0.0, 4.0] {
            assert!(mlp_apply(&p, &[x, -x, 1.0]).unwrap()[0] > 0.0);
        }
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let arch = Mlp::new(vec![4, 6, 5, 2], OutputTransform::Softplus).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = arch.init(&mut rng);
        let input = [0.3, -1.2, 2.0, 0.01];
        let plain = arch.forward(&mut Plain, &values, &input).unwrap();
        let mut all = values.clone();
        all.extend_from_slice(&input);
        let n = values.len();
        let (v, _) = tape_eval_grad(
            |t, p| {
                let out = arch.forward(t, &p[..n], &p[n..]).unwrap();
                out[1]
            },
            &all,
        )
        .unwrap();
        assert_eq!(v.to_bits(), plain[1].to_bits());
    }
}
