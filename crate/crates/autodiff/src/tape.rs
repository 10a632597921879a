use crate::error::AutodiffError;
use crate::graph::{softplus, Graph};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    /// Leaf or constant; no parents.
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Scale(u32, f64),
    /// Identity with respect to one parent (shift, the active side of
    /// max/min/relu/clamp).
    Pass(u32),
    Exp(u32),
    Softplus(u32),
    /// `args[start..start + len]`
    Sum(u32, u32),
    /// Pairs `(args[start + 2k], args[start + 2k + 1])`.
    Dot(u32, u32),
}

/// Append-only record of a computation, differentiated in reverse.
///
/// Nodes are stored in creation order, which is a topological order, so
/// the backward sweep is a single reverse pass over the node list.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
    args: Vec<u32>,
    fault: Option<AutodiffError>,
    kink_margin: f64,
}

/// Adjoints of every node with respect to one output.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        self.adjoints[v.index()]
    }

    pub fn wrt_all(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            kink_margin: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            ops: Vec::with_capacity(nodes),
            values: Vec::with_capacity(nodes),
            args: Vec::with_capacity(nodes),
            fault: None,
            kink_margin: f64::INFINITY,
        }
    }

    /// Drops all nodes but keeps the allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.values.clear();
        self.args.clear();
        self.fault = None;
        self.kink_margin = f64::INFINITY;
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Smallest distance from a non-smooth switch seen so far
    /// (`|a - b|` for max/min, `|a|` for relu, distance to a clamp bound).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// First arithmetic fault recorded, if any.
    pub fn fault(&self) -> Option<&AutodiffError> {
        self.fault.as_ref()
    }

    pub fn var(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn vars(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        let idx = self.ops.len();
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(AutodiffError::NonFinite { node: idx, value });
        }
        self.ops.push(op);
        self.values.push(value);
        Var(idx as u32)
    }

    fn val(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    fn note_kink(&mut self, distance: f64) {
        let d = distance.abs();
        if d < self.kink_margin {
            self.kink_margin = d;
        }
    }

    /// Reverse sweep from `output`. Fails if any recorded value was
    /// non-finite or a division by zero occurred.
    pub fn gradient(&self, output: Var) -> Result<Gradients, AutodiffError> {
        if let Some(err) = &self.fault {
            return Err(err.clone());
        }
        let n = output.index() + 1;
        let mut adj = vec![0.0; self.ops.len()];
        adj[output.index()] = 1.0;
        for i in (0..n).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += g * self.values[b as usize];
                    adj[b as usize] += g * self.values[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = self.values[b as usize];
                    adj[a as usize] += g / vb;
                    adj[b as usize] -= g * self.values[i] / vb;
                }
                Op::Scale(a, c) => adj[a as usize] += g * c,
                Op::Pass(a) => adj[a as usize] += g,
                Op::Exp(a) => adj[a as usize] += g * self.values[i],
                Op::Softplus(a) => {
                    let x = self.values[a as usize];
                    adj[a as usize] += g / (1.0 + (-x).exp());
                }
                Op::Sum(start, len) => {
                    for &p in &self.args[start as usize..(start + len) as usize] {
                        adj[p as usize] += g;
                    }
                }
                Op::Dot(start, len) => {
                    let pairs = &self.args[start as usize..(start + 2 * len) as usize];
                    for pair in pairs.chunks_exact(2) {
                        let (a, b) = (pair[0] as usize, pair[1] as usize);
                        adj[a] += g * self.values[b];
                        adj[b] += g * self.values[a];
                    }
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

impl Graph for Tape {
    type V = Var;

    fn constant(&mut self, c: f64) -> Var {
        self.push(Op::Leaf, c)
    }
    fn value(&self, v: Var) -> f64 {
        self.val(v)
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.push(Op::Add(a.0, b.0), v)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.push(Op::Sub(a.0, b.0), v)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) * self.val(b);
        self.push(Op::Mul(a.0, b.0), v)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        let vb = self.val(b);
        if vb == 0.0 && self.fault.is_none() {
            self.fault = Some(AutodiffError::DivisionByZero {
                node: self.ops.len(),
            });
        }
        let v = self.val(a) / vb;
        self.push(Op::Div(a.0, b.0), v)
    }
    fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.val(a);
        self.push(Op::Scale(a.0, c), v)
    }
    fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) + c;
        self.push(Op::Pass(a.0), v)
    }
    fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).exp();
        self.push(Op::Exp(a.0), v)
    }
    fn relu(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.note_kink(x);
        if x > 0.0 {
            self.push(Op::Pass(a.0), x)
        } else {
            self.push(Op::Leaf, 0.0)
        }
    }
    fn softplus(&mut self, a: Var) -> Var {
        let v = softplus(self.val(a));
        self.push(Op::Softplus(a.0), v)
    }
    fn max(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.note_kink(x - y);
        if x > y {
            self.push(Op::Pass(a.0), x)
        } else {
            self.push(Op::Pass(b.0), y)
        }
    }
    fn min(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.note_kink(x - y);
        if x < y {
            self.push(Op::Pass(a.0), x)
        } else {
            self.push(Op::Pass(b.0), y)
        }
    }
    fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let x = self.val(a);
        self.note_kink((x - lo).abs().min((x - hi).abs()));
        if x <= lo {
            self.push(Op::Leaf, lo)
        } else if x >= hi {
            self.push(Op::Leaf, hi)
        } else {
            self.push(Op::Pass(a.0), x)
        }
    }
    fn sum(&mut self, xs: &[Var]) -> Var {
        let v: f64 = xs.iter().map(|&x| self.val(x)).sum();
        let start = self.args.len() as u32;
        self.args.extend(xs.iter().map(|x| x.0));
        self.push(Op::Sum(start, xs.len() as u32), v)
    }
    fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        debug_assert_eq!(a.len(), b.len());
        let v: f64 = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| self.val(x) * self.val(y))
            .sum();
        let start = self.args.len() as u32;
        for (x, y) in a.iter().zip(b) {
            self.args.push(x.0);
            self.args.push(y.0);
        }
        self.push(Op::Dot(start, a.len() as u32), v)
    }
}

/// Evaluates `build` on fresh leaves holding `params` and returns the output
/// value with its gradient with respect to every parameter.
pub fn tape_eval_grad<F>(build: F, params: &[f64]) -> Result<(f64, Vec<f64>), AutodiffError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let leaves = tape.vars(params);
    let out = build(&mut tape, &leaves);
    let grads = tape.gradient(out)?;
    Ok((tape.value(out), grads.wrt_all(&leaves)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let (v, g) = tape_eval_grad(|t, p| t.mul(p[0], p[1]), &[2.0, 3.0]).unwrap();
        assert_eq!(v, 6.0);
        assert_eq!(g, vec![3.0, 2.0]);
    }

    #[test]
    fn relu_derivative_is_zero_at_and_below_kink() {
        for (x, want) in [(-1.0, 0.0), (0.0, 0.0), (2.0, 1.0)] {
            let (_, g) = tape_eval_grad(|t, p| t.relu(p[0]), &[x]).unwrap();
            assert_eq!(g[0], want, "x = {x}");
        }
    }

    #[test]
    fn division_by_zero_is_reported() {
        let err = tape_eval_grad(|t, p| t.div(p[0], p[1]), &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, AutodiffError::DivisionByZero { .. }));
    }

    #[test]
    fn nan_surfaces_as_error() {
        let err = tape_eval_grad(|t, p| t.mul(p[0], p[1]), &[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite { .. }));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = x * x + exp(x), f' = 2x + exp(x)
        let (_, g) = tape_eval_grad(
            |t, p| {
                let sq = t.mul(p[0], p[0]);
                let e = t.exp(p[0]);
                t.add(sq, e)
            },
            &[0.7],
        )
        .unwrap();
        assert!((g[0] - (1.4 + 0.7f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn dot_and_sum() {
        let (v, g) = tape_eval_grad(
            |t, p| {
                let d = t.dot(&p[0..2], &p[2..4]);
                t.sum(&[d, p[0]])
            },
            &[1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        assert_eq!(v, 12.0);
        assert_eq!(g, vec![4.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn kink_margin_tracks_closest_switch() {
        let mut t = Tape::new();
        let a = t.var(0.3);
        let b = t.var(-0.05);
        t.relu(a);
        t.relu(b);
        assert!((t.kink_margin() - 0.05).abs() < 1e-15);
    }
}
