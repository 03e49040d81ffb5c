//! Reverse-mode differentiation over batch matrices.
//!
//! A [`Tape`] records the value of every node produced during one forward
//! pass together with the operation that produced it. Gradients are obtained
//! by walking the nodes in reverse insertion order, which is a valid
//! topological order because every operation only references earlier nodes.

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Data with no gradient (inputs, targets, resampled marginals).
    Constant,
    /// A differentiable leaf (network parameters, or inputs under test).
    Variable,
    /// `x · wᵀ` with `w` stored as (out × in).
    MatMulT { x: NodeId, w: NodeId },
    /// Adds a 1 × k row to every row of `x`.
    AddBias { x: NodeId, b: NodeId },
    Tanh(NodeId),
    /// Elementwise mask, already scaled by 1 / (1 − p).
    Dropout { x: NodeId, mask: Vec<f64> },
    /// Column-wise batch standardization; keeps 1/sqrt(var + ε) per column.
    Standardize { x: NodeId, inv_std: Vec<f64> },
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    /// Mean over every element, producing 1 × 1.
    Mean(NodeId),
    ConcatCols(NodeId, NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

/// Mean and population variance of a slice.
pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1 × 1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[(0, 0)]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn same_shape(&self, a: NodeId, b: NodeId, context: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(context, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn variable(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Variable, true)
    }

    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let value = self.value(x).matmul_transposed(self.value(w))?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(value, Op::MatMulT { x, w }, needs))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("Tape::add_bias", format!("1x{}", xv.cols()), format!("{:?}", bv.shape())));
        }
        let mut value = xv.clone();
        let k = value.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % k];
        }
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(value, Op::AddBias { x, b }, needs))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        let needs = self.needs(x);
        self.push(value, Op::Tanh(x), needs)
    }

    /// Applies a precomputed inverted-dropout mask.
    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if mask.len() != xv.data().len() {
            return Err(shape_err("Tape::dropout", xv.data().len(), mask.len()));
        }
        let mut value = xv.clone();
        for (v, m) in value.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout { x, mask }, needs))
    }

    /// Standardizes each column over the batch: (x − mean) / sqrt(var + ε).
    pub fn standardize(&mut self, x: NodeId, epsilon: f64) -> Result<NodeId> {
        let xv = self.value(x);
        let (b, k) = xv.shape();
        if b < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: b });
        }
        let mut value = xv.clone();
        let mut inv_std = Vec::with_capacity(k);
        for c in 0..k {
            let col = xv.column(c);
            let (mean, var) = mean_var(&col);
            let inv = 1.0 / (var + epsilon).sqrt();
            for r in 0..b {
                value[(r, c)] = (col[r] - mean) * inv;
            }
            inv_std.push(inv);
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::Standardize { x, inv_std }, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "Tape::mul")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "Tape::add")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "Tape::sub")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        let needs = self.needs(x);
        self.push(value, Op::Scale(x, factor), needs)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v * v);
        let needs = self.needs(x);
        self.push(value, Op::Square(x), needs)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::exp);
        let needs = self.needs(x);
        self.push(value, Op::Exp(x), needs)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::ln);
        let needs = self.needs(x);
        self.push(value, Op::Ln(x), needs)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data();
        let m = data.iter().sum::<f64>() / data.len() as f64;
        let needs = self.needs(x);
        self.push(Matrix::from_fn(1, 1, |_, _| m), Op::Mean(x), needs)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("Tape::concat_cols", av.rows(), bv.rows()));
        }
        let (ka, kb) = (av.cols(), bv.cols());
        let value = Matrix::from_fn(av.rows(), ka + kb, |r, c| {
            if c < ka {
                av[(r, c)]
            } else {
                bv[(r, c - ka)]
            }
        });
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatCols(a, b), needs))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        let needs = self.needs(x);
        self.push(value, Op::Clamp { x, lo, hi }, needs)
    }

    /// Propagates `seed` (shaped like `root`) back through the tape.
    ///
    /// The tape is left intact so several roots of the same forward pass can
    /// be differentiated separately.
    pub fn backward(&self, root: NodeId, seed: &Matrix) -> Result<Gradients> {
        if self.value(root).shape() != seed.shape() {
            return Err(shape_err(
                "Tape::backward",
                format!("{:?}", self.value(root).shape()),
                format!("{:?}", seed.shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed.clone());

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            // Leaves keep their accumulated gradient for the caller.
            if !node.needs_grad || matches!(node.op, Op::Constant | Op::Variable) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant | Op::Variable => unreachable!(),
                Op::MatMulT { x, w } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g.matmul(wv)?);
                    }
                    if self.needs(*w) {
                        accumulate(&mut grads, *w, g.transposed_matmul(xv)?);
                    }
                }
                Op::AddBias { x, b } => {
                    if self.needs(*b) {
                        let k = g.cols();
                        let mut db = Matrix::zeros(1, k);
                        for r in 0..g.rows() {
                            for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Tanh(x) => {
                    let dx = zip_map(&g, &node.value, |gi, y| gi * (1.0 - y * y));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout { x, mask } => {
                    let mut dx = g;
                    for (d, m) in dx.data_mut().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Standardize { x, inv_std } => {
                    let y = &node.value;
                    let (b, k) = y.shape();
                    let mut dx = Matrix::zeros(b, k);
                    for (c, &inv) in inv_std.iter().enumerate() {
                        let mut mean_g = 0.0;
                        let mut mean_gy = 0.0;
                        for r in 0..b {
                            mean_g += g[(r, c)];
                            mean_gy += g[(r, c)] * y[(r, c)];
                        }
                        mean_g /= b as f64;
                        mean_gy /= b as f64;
                        for r in 0..b {
                            dx[(r, c)] = inv * (g[(r, c)] - mean_g - y[(r, c)] * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, zip_map(&g, self.value(*b), |gi, v| gi * v));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, zip_map(&g, self.value(*a), |gi, v| gi * v));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(x, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *x, g.map(|v| v * f));
                }
                Op::Square(x) => {
                    let dx = zip_map(&g, self.value(*x), |gi, v| 2.0 * gi * v);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Exp(x) => {
                    let dx = zip_map(&g, &node.value, |gi, y| gi * y);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Ln(x) => {
                    let dx = zip_map(&g, self.value(*x), |gi, v| gi / v);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let share = g[(0, 0)] / xv.data().len() as f64;
                    let (r, c) = xv.shape();
                    accumulate(&mut grads, *x, Matrix::from_fn(r, c, |_, _| share));
                }
                Op::ConcatCols(a, b) => {
                    let ka = self.value(*a).cols();
                    let kb = self.value(*b).cols();
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, Matrix::from_fn(g.rows(), ka, |r, c| g[(r, c)]));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, Matrix::from_fn(g.rows(), kb, |r, c| g[(r, c + ka)]));
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let dx = zip_map(&g, self.value(*x), |gi, v| if v < lo || v > hi { 0.0 } else { gi });
                    accumulate(&mut grads, *x, dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("zip_map shapes agree")
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
