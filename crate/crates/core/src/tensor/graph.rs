use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, gemm_new, matmul_dims, Tensor};
use crate::error::TensorError;
use crate::math;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Scale(Var, f64),
    Clamp(Var, f64, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. Nodes are stored in forward execution order, so the tape
/// order is a topological order of the graph.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    no_grad: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that never records backward information. Values are still
    /// stored so results can be read back.
    pub fn no_grad() -> Self {
        Self {
            no_grad: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node and gradient.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    /// Drops every node created after the first `len`; handles to removed
    /// nodes become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.truncate(len);
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let requires_grad = !self.no_grad;
        self.push_leaf(value, requires_grad)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = !self.no_grad && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor {
            shape: ta.shape().to_vec(),
            data,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k, n) = matmul_dims(self.value(a), self.value(b))?;
        let out = gemm_new(m, k, n, self.value(a).data(), self.value(b).data());
        let value = Tensor {
            shape: vec![m, n],
            data: out,
        };
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Elementwise sum. `b` may also be a rank-1 bias whose length equals the
    /// last axis of `a`; it is then added to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let value = self.zip(a, b, |x, y| x + y);
            return self.push("add", value, Op::Add(a, b), &[a, b]);
        }
        if sb.len() == 1 && sa.len() == 2 && sa[1] == sb[0] {
            let bias = self.value(b).data();
            let w = sb[0];
            let mut data = self.value(a).data().to_vec();
            for row in data.chunks_mut(w) {
                row.iter_mut().zip(bias).for_each(|(x, &y)| *x += y);
            }
            let value = Tensor {
                shape: sa.to_vec(),
                data,
            };
            return self.push("add", value, Op::AddRow(a, b), &[a, b]);
        }
        Err(TensorError::Shape {
            op: "add",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let value = self.zip(a, b, |x, y| x - y);
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let value = self.zip(a, b, |x, y| x * y);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Shape {
            op: "concat",
            lhs: Vec::new(),
            rhs: Vec::new(),
        })?;
        let lead = {
            let s = self.value(first).shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let rows = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: s.to_vec(),
                });
            }
            total += self.value(p).width();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor { shape, data };
        self.push("concat", value, Op::Concat(parts.to_vec()), parts)
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        let w = t.width();
        if t.shape().is_empty() || start > end || end > w {
            return Err(TensorError::Slice {
                start,
                end,
                width: w,
            });
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let value = Tensor { shape, data };
        self.push("slice", value, Op::Slice(a, start, end), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(math::sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(math::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", value, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(math::exp);
        self.push("exp", value, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(math::ln);
        self.push("log", value, Op::Log(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * x);
        self.push("square", value, Op::Square(a), &[a])
    }

    /// Sum of all entries, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Multiplies every entry by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * factor);
        self.push("scale", value, Op::Scale(a, factor), &[a])
    }

    /// Clamps entries to `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push("clamp", value, Op::Clamp(a, lo, hi), &[a])
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls; intermediate records are released afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: lt.shape().to_vec(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        if self.grads.len() < n {
            self.grads.resize(n, None);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    match &mut self.grads[i] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(g),
                    }
                }
                continue;
            }
            let nodes = &self.nodes;
            let out = &node.value;
            let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
                let target = &nodes[v.0];
                if !target.requires_grad {
                    return;
                }
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.len()]);
                f(buf);
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k, nn) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    // dA = G B^T, dB = A^T G
                    acc(*a, &|buf| gemm(m, nn, k, &g, false, tb.data(), true, buf, 1.0));
                    acc(*b, &|buf| gemm(k, m, nn, ta.data(), true, &g, false, buf, 1.0));
                }
                Op::Add(a, b) => {
                    acc(*a, &|buf| add_into(buf, &g));
                    acc(*b, &|buf| add_into(buf, &g));
                }
                Op::AddRow(a, b) => {
                    acc(*a, &|buf| add_into(buf, &g));
                    acc(*b, &|buf| {
                        let w = buf.len();
                        for row in g.chunks(w) {
                            add_into(buf, row);
                        }
                    });
                }
                Op::Sub(a, b) => {
                    acc(*a, &|buf| add_into(buf, &g));
                    acc(*b, &|buf| buf.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    acc(*a, &|buf| {
                        for ((x, gi), bi) in buf.iter_mut().zip(&g).zip(vb) {
                            *x += gi * bi;
                        }
                    });
                    acc(*b, &|buf| {
                        for ((x, gi), ai) in buf.iter_mut().zip(&g).zip(va) {
                            *x += gi * ai;
                        }
                    });
                }
                Op::Concat(parts) => {
                    let total = out.width();
                    let mut offset = 0;
                    for p in parts {
                        let w = nodes[p.0].value.width();
                        acc(*p, &|buf| {
                            for (r, row) in buf.chunks_mut(w).enumerate() {
                                let src = &g[r * total + offset..r * total + offset + w];
                                add_into(row, src);
                            }
                        });
                        offset += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let w_in = nodes[a.0].value.width();
                    let w = end - start;
                    acc(*a, &|buf| {
                        for (r, row) in buf.chunks_mut(w_in).enumerate() {
                            add_into(&mut row[*start..*end], &g[r * w..(r + 1) * w]);
                        }
                    });
                }
                Op::Sigmoid(a) => acc(*a, &|buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        *x += gi * y * (1.0 - y);
                    }
                }),
                Op::Tanh(a) => acc(*a, &|buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        *x += gi * (1.0 - y * y);
                    }
                }),
                Op::Relu(a) => acc(*a, &|buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        if *y > 0.0 {
                            *x += gi;
                        }
                    }
                }),
                Op::Exp(a) => acc(*a, &|buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        *x += gi * y;
                    }
                }),
                Op::Log(a) => {
                    let va = nodes[a.0].value.data();
                    acc(*a, &|buf| {
                        for ((x, gi), xi) in buf.iter_mut().zip(&g).zip(va) {
                            *x += gi / xi;
                        }
                    })
                }
                Op::Square(a) => {
                    let va = nodes[a.0].value.data();
                    acc(*a, &|buf| {
                        for ((x, gi), xi) in buf.iter_mut().zip(&g).zip(va) {
                            *x += 2.0 * gi * xi;
                        }
                    })
                }
                Op::Sum(a) => acc(*a, &|buf| buf.iter_mut().for_each(|x| *x += g[0])),
                Op::Mean(a) => acc(*a, &|buf| {
                    let s = g[0] / buf.len() as f64;
                    buf.iter_mut().for_each(|x| *x += s)
                }),
                Op::Scale(a, f) => acc(*a, &|buf| {
                    for (x, gi) in buf.iter_mut().zip(&g) {
                        *x += gi * f;
                    }
                }),
                Op::Clamp(a, lo, hi) => {
                    let va = nodes[a.0].value.data();
                    acc(*a, &|buf| {
                        for ((x, gi), xi) in buf.iter_mut().zip(&g).zip(va) {
                            if *xi >= *lo && *xi <= *hi {
                                *x += gi;
                            }
                        }
                    })
                }
            }
        }

        for node in &mut self.nodes[..=loss.0] {
            if !matches!(node.op, Op::Leaf) {
                node.op = Op::Leaf;
                node.requires_grad = false;
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
