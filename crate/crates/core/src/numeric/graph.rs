//! Reverse-mode differentiation over a recorded list of primitive ops.
//!
//! Every op appends a node whose inputs all have smaller indices, so walking
//! the node list backwards visits each node after all of its consumers.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::tensor::axis_extents;
use crate::numeric::{ParamId, ParamStore, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Entrywise functions supported by [`Graph::unary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Neg,
    Relu,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Neg => -x,
            Unary::Relu => x.max(0.0),
        }
    }

    /// d(out)/d(in) from the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Neg => -1.0,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(xs)` with max-shift; `-inf` for an all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Unary(Var, Unary),
    Hadamard(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    LogSumExp { input: Var, axis: usize },
    Gather { input: Var, indices: Vec<usize> },
    IndexRows { input: Var, rows: Vec<usize> },
    Reshape(Var),
    Transpose(Var),
    Broadcast(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Record of the primitive operations of one forward pass.
///
/// A graph is built for a single forward/backward pass and then dropped.
/// Parameter leaves share their value with the [`ParamStore`] they were
/// read from; [`Graph::backward`] adds their gradients into that store.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: HashMap<usize, Tensor>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is accumulated inside the graph; see [`Graph::grad`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).shared_value();
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Sub(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a);
        let data = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x * factor).collect())
            .expect("same shape");
        let needs = self.needs(a);
        self.push(data, Op::Scale(a, factor), needs)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "hadamard")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Hadamard(a, b), needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: shapes {:?} and {:?} have mismatched inner dimensions",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Result<Var> {
        let v = self.value(a);
        if f == Unary::Log {
            if let Some(bad) = v.data().iter().find(|&&x| x <= 0.0) {
                return Err(Error::Domain(format!("log of non-positive entry {bad}")));
            }
        }
        let data = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f.apply(x)).collect())?;
        let needs = self.needs(a);
        Ok(self.push(data, Op::Unary(a, f), needs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid).expect("total function")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh).expect("total function")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu).expect("total function")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp).expect("total function")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Neg).expect("total function")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Unary::Log)
    }

    /// Joins `parts` along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero parts"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat along axis {axis}: shapes {base:?} and {s:?} are incompatible"
                )));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let n = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * n..(o + 1) * n]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Entries `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice {start}..{} along axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::Slice {
                input: a,
                axis,
                start,
            },
            needs,
        ))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    /// `log Σ exp` along `axis`, keeping that axis with extent 1.
    pub fn logsumexp(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Domain(format!(
                "logsumexp axis {axis} out of range for {shape:?}"
            )));
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                out.push(log_sum_exp((0..n).map(|k| src[(o * n + k) * inner + i])));
            }
        }
        let mut new_shape = shape;
        new_shape[axis] = 1;
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::LogSumExp { input: a, axis },
            needs,
        ))
    }

    /// Picks entries by flat row-major index into a rank-1 result.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if indices.is_empty() {
            return Err(Error::dim("gather with no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.numel()) {
            return Err(Error::dim(format!(
                "gather index {bad} out of range for {:?}",
                v.shape()
            )));
        }
        let out: Vec<f64> = indices.iter().map(|&i| v.data()[i]).collect();
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::vector(out),
            Op::Gather {
                input: a,
                indices: indices.to_vec(),
            },
            needs,
        ))
    }

    /// Stacks the selected rows of a matrix (embedding lookup).
    pub fn index_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.dims2()?;
        if rows.is_empty() {
            return Err(Error::dim("index_rows with no rows"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::dim(format!("row {bad} out of range for {:?}", v.shape())));
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(v.row_slice(i));
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(vec![rows.len(), c], out)?,
            Op::IndexRows {
                input: a,
                rows: rows.to_vec(),
            },
            needs,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = (*self.nodes[a.0].value).clone().reshaped(shape.to_vec())?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v.data()[i * c + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), needs))
    }

    /// Repeats extent-1 dimensions of `a` to reach `shape` (same rank).
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let src_shape = self.shape(a).to_vec();
        let ok = src_shape.len() == shape.len()
            && src_shape
                .iter()
                .zip(shape)
                .all(|(&s, &t)| s == t || s == 1);
        if !ok {
            return Err(Error::dim(format!(
                "cannot broadcast {src_shape:?} to {shape:?}"
            )));
        }
        let map = broadcast_map(&src_shape, shape);
        let src = self.value(a).data();
        let out = map.iter().map(|&i| src[i]).collect();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape.to_vec(), out)?, Op::Broadcast(a), needs))
    }

    /// `x + bias` with a `[1, n]` bias repeated over the rows of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let b = if self.shape(bias) == shape.as_slice() {
            bias
        } else {
            self.broadcast(bias, &shape)?
        };
        self.add(x, b)
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let lse = self.logsumexp(x, 1)?;
        let lse = self.broadcast(lse, &shape)?;
        self.sub(x, lse)
    }

    /// Gradients of a scalar `root` with respect to `wrt`, without touching
    /// any accumulated state.
    pub fn gradients(&self, root: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let grads = self.propagate(root)?;
        Ok(wrt
            .iter()
            .map(|&v| {
                let shape = self.shape(v).to_vec();
                match &grads[v.0] {
                    Some(g) => Tensor::new(shape, g.clone()).expect("grad shape"),
                    None => Tensor::zeros(&shape),
                }
            })
            .collect())
    }

    /// Back-propagates from a scalar `root`.
    ///
    /// Parameter gradients are added into `store`; gradients of
    /// [`Graph::variable`] leaves are added into the graph's own buffers.
    pub fn backward(&mut self, root: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.propagate(root)?;
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            match self.nodes[i].op {
                Op::Param(id) => store.accumulate_grad(id, &g),
                Op::Leaf if self.nodes[i].needs_grad => {
                    let shape = self.nodes[i].value.shape().to_vec();
                    let slot = self
                        .leaf_grads
                        .entry(i)
                        .or_insert_with(|| Tensor::zeros(&shape));
                    for (s, d) in slot.data_mut().iter_mut().zip(&g) {
                        *s += d;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a [`Graph::variable`] leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(&v.0)
    }

    fn propagate(&self, root: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if !self.value(root).is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !self.needs(root) {
            return Ok(grads);
        }
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |ga| add_into(ga, &g, 1.0));
                    self.acc(&mut grads, *b, |gb| add_into(gb, &g, 1.0));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |ga| add_into(ga, &g, 1.0));
                    self.acc(&mut grads, *b, |gb| add_into(gb, &g, -1.0));
                }
                Op::Scale(a, f) => self.acc(&mut grads, *a, |ga| add_into(ga, &g, *f)),
                Op::Hadamard(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    self.acc(&mut grads, *a, |ga| {
                        for ((x, d), y) in ga.iter_mut().zip(&g).zip(vb) {
                            *x += d * y;
                        }
                    });
                    self.acc(&mut grads, *b, |gb| {
                        for ((x, d), y) in gb.iter_mut().zip(&g).zip(va) {
                            *x += d * y;
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let n = self.value(*b).shape()[1];
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    // dA = G · Bᵀ
                    self.acc(&mut grads, *a, |ga| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for c in 0..k {
                                let brow = &vb[c * n..(c + 1) * n];
                                ga[r * k + c] += dot(grow, brow);
                            }
                        }
                    });
                    // dB = Aᵀ · G
                    self.acc(&mut grads, *b, |gb| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for c in 0..k {
                                let av = va[r * k + c];
                                if av != 0.0 {
                                    add_into(&mut gb[c * n..(c + 1) * n], grow, av);
                                }
                            }
                        }
                    });
                }
                Op::Unary(a, f) => {
                    let x = self.value(*a).data();
                    self.acc(&mut grads, *a, |ga| {
                        for (((s, d), &xi), &yi) in ga.iter_mut().zip(&g).zip(x).zip(out.data()) {
                            *s += d * f.derivative(xi, yi);
                        }
                    });
                }
                Op::Concat { parts, axis } => {
                    let (outer, _, inner) = axis_extents(out.shape(), *axis);
                    let total = out.shape()[*axis] * inner;
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.shape(p)[*axis] * inner;
                        self.acc(&mut grads, p, |gp| {
                            for o in 0..outer {
                                add_into(
                                    &mut gp[o * n..(o + 1) * n],
                                    &g[o * total + offset..o * total + offset + n],
                                    1.0,
                                );
                            }
                        });
                        offset += n;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let (outer, n, inner) = axis_extents(self.shape(*input), *axis);
                    let len = out.shape()[*axis];
                    self.acc(&mut grads, *input, |gi| {
                        for o in 0..outer {
                            let base = (o * n + start) * inner;
                            add_into(
                                &mut gi[base..base + len * inner],
                                &g[o * len * inner..(o + 1) * len * inner],
                                1.0,
                            );
                        }
                    });
                }
                Op::Sum(a) => {
                    let d = g[0];
                    self.acc(&mut grads, *a, |ga| ga.iter_mut().for_each(|x| *x += d));
                }
                Op::LogSumExp { input, axis } => {
                    let (outer, n, inner) = axis_extents(self.shape(*input), *axis);
                    let x = self.value(*input).data();
                    self.acc(&mut grads, *input, |gi| {
                        for o in 0..outer {
                            for i in 0..inner {
                                let s = out.data()[o * inner + i];
                                if s == f64::NEG_INFINITY {
                                    continue;
                                }
                                let d = g[o * inner + i];
                                for k in 0..n {
                                    let idx = (o * n + k) * inner + i;
                                    gi[idx] += d * (x[idx] - s).exp();
                                }
                            }
                        }
                    });
                }
                Op::Gather { input, indices } => {
                    self.acc(&mut grads, *input, |gi| {
                        for (&j, d) in indices.iter().zip(&g) {
                            gi[j] += d;
                        }
                    });
                }
                Op::IndexRows { input, rows } => {
                    let c = out.shape()[1];
                    self.acc(&mut grads, *input, |gi| {
                        for (r, &src) in rows.iter().enumerate() {
                            add_into(&mut gi[src * c..(src + 1) * c], &g[r * c..(r + 1) * c], 1.0);
                        }
                    });
                }
                Op::Reshape(a) => self.acc(&mut grads, *a, |ga| add_into(ga, &g, 1.0)),
                Op::Transpose(a) => {
                    let (r, c) = self.value(*a).dims2()?;
                    self.acc(&mut grads, *a, |ga| {
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * c + j] += g[j * r + i];
                            }
                        }
                    });
                }
                Op::Broadcast(a) => {
                    let map = broadcast_map(self.shape(*a), out.shape());
                    self.acc(&mut grads, *a, |ga| {
                        for (&src, d) in map.iter().zip(&g) {
                            ga[src] += d;
                        }
                    });
                }
            }
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let n = self.value(v).numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked by caller")
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            add_into(orow, &b[p * n..(p + 1) * n], av);
        }
    }
}

/// For every flat index of `target`, the flat index in `src` it reads from.
fn broadcast_map(src: &[usize], target: &[usize]) -> Vec<usize> {
    let rank = target.len();
    let mut src_strides = vec![0; rank];
    let mut stride = 1;
    for d in (0..rank).rev() {
        src_strides[d] = if src[d] == 1 { 0 } else { stride };
        stride *= src[d];
    }
    let n: usize = target.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        out.push(idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}
