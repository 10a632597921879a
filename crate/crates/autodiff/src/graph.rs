/// Arithmetic backend shared by the plain evaluator and the gradient tape.
///
/// Non-smooth primitives (`relu`, `max`, `min`, `clamp`) follow one
/// convention everywhere: at a tie the derivative goes to the second
/// argument (for `relu`, the constant zero), so `d relu(x)/dx = 0` at `x = 0`.
pub trait Graph {
    type V: Copy;

    fn constant(&mut self, c: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    /// `c * a`
    fn scale(&mut self, a: Self::V, c: f64) -> Self::V;
    /// `a + c`
    fn shift(&mut self, a: Self::V, c: f64) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn relu(&mut self, a: Self::V) -> Self::V;
    fn softplus(&mut self, a: Self::V) -> Self::V;
    fn max(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn min(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn clamp(&mut self, a: Self::V, lo: f64, hi: f64) -> Self::V;
    fn sum(&mut self, xs: &[Self::V]) -> Self::V;
    /// Inner product of two equally long slices.
    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Self::V;

    fn square(&mut self, a: Self::V) -> Self::V {
        self.mul(a, a)
    }

    fn constants(&mut self, cs: &[f64]) -> Vec<Self::V> {
        cs.iter().map(|&c| self.constant(c)).collect()
    }
}

/// Plain `f64` evaluation with no recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph for Plain {
    type V = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        c * a
    }
    fn shift(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn relu(&mut self, a: f64) -> f64 {
        if a > 0.0 {
            a
        } else {
            0.0
        }
    }
    fn softplus(&mut self, a: f64) -> f64 {
        softplus(a)
    }
    fn max(&mut self, a: f64, b: f64) -> f64 {
        if a > b {
            a
        } else {
            b
        }
    }
    fn min(&mut self, a: f64, b: f64) -> f64 {
        if a < b {
            a
        } else {
            b
        }
    }
    fn clamp(&mut self, a: f64, lo: f64, hi: f64) -> f64 {
        a.clamp(lo, hi)
    }
    fn sum(&mut self, xs: &[f64]) -> f64 {
        xs.iter().sum()
    }
    fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
