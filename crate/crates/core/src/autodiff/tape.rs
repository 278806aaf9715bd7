//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s in execution
//! order, so the node list is topologically sorted by construction. Leaves
//! may borrow their values (model weights are shared read-only between
//! concurrent tapes) or own them. [`Tape::backward`] walks the nodes once in
//! reverse, accumulating gradients into every input that requires one.

use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Transpose(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'a> {
    id: u64,
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an owned leaf.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Records a leaf that borrows its value.
    pub fn leaf_ref(&mut self, value: &'a Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn check(&self, op: &'static str, vars: &[Var]) -> Result<()> {
        for v in vars {
            if v.tape != self.id || v.index >= self.nodes.len() {
                return Err(Error::InvalidOp {
                    op,
                    msg: "variable does not belong to this tape".into(),
                });
            }
        }
        Ok(())
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = self.any_grad(inputs);
        self.push(Cow::Owned(value), op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("matmul", &[a, b])?;
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.record(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("add", &[a, b])?;
        let out = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.record(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("mul", &[a, b])?;
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.record(out, Op::Mul(a, b), &[a, b]))
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, &[ta.shape(), tb.shape()]));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.check("scale", &[a])?;
        let out = self.value(a).map(|x| x * factor);
        Ok(self.record(out, Op::Scale(a, factor), &[a]))
    }

    /// Softmax over each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, false)
    }

    /// Row softmax where entry `(i, j)` with `j > i` is masked out (exactly 0).
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, true)
    }

    fn softmax_impl(&mut self, a: Var, causal: bool) -> Result<Var> {
        self.check("softmax", &[a])?;
        let x = self.value(a);
        let (r, c) = x.dims2("softmax")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let width = if causal { (i + 1).min(c) } else { c };
            let row = &x.row(i)[..width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * c..i * c + width];
            let mut z = 0.0;
            for (oj, &xj) in o.iter_mut().zip(row) {
                *oj = (xj - max).exp();
                z += *oj;
            }
            for oj in o.iter_mut() {
                *oj /= z;
            }
        }
        let out = Tensor::new(vec![r, c], out)?;
        Ok(self.record(out, Op::Softmax(a), &[a]))
    }

    /// Layer normalization over the last axis of a `(rows, d)` matrix with
    /// per-feature scale `gamma` and shift `beta` (both length `d`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check("layer_norm", &[x, gamma, beta])?;
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let (r, d) = tx.dims2("layer_norm")?;
        if tg.len() != d || tb.len() != d {
            return Err(Error::shape(
                "layer_norm",
                &[tx.shape(), tg.shape(), tb.shape()],
            ));
        }
        let mut xhat = vec![0.0; r * d];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[i * d + j] = h;
                out[i * d + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(vec![r, d], out)?;
        Ok(self.record(
            out,
            Op::LayerNorm {
                input: x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.check("gelu", &[a])?;
        let out = self.value(a).map(gelu);
        Ok(self.record(out, Op::Gelu(a), &[a]))
    }

    /// Gathers rows of `table` (`vocab × d`) by id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.check("embedding", &[table])?;
        let t = self.value(table);
        let (v, d) = t.dims2("embedding")?;
        if ids.is_empty() {
            return Err(Error::InvalidOp {
                op: "embedding",
                msg: "empty id list".into(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidOp {
                op: "embedding",
                msg: format!("id {bad} out of range for table of {v} rows"),
            });
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.record(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check("transpose", &[a])?;
        let out = self.value(a).transpose()?;
        Ok(self.record(out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check("reshape", &[a])?;
        let out = self.value(a).reshape(shape)?;
        Ok(self.record(out, Op::Reshape(a), &[a]))
    }

    /// Concatenates matrices along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.check("concat", inputs)?;
        if inputs.is_empty() || axis > 1 {
            return Err(Error::InvalidOp {
                op: "concat",
                msg: format!("{} inputs along axis {axis}", inputs.len()),
            });
        }
        let dims = inputs
            .iter()
            .map(|&v| self.value(v).dims2("concat"))
            .collect::<Result<Vec<_>>>()?;
        let shapes: Vec<&[usize]> = inputs.iter().map(|&v| self.value(v).shape()).collect();
        let out = if axis == 0 {
            let c = dims[0].1;
            if dims.iter().any(|d| d.1 != c) {
                return Err(Error::shape("concat", &shapes));
            }
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c);
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            Tensor::new(vec![rows, c], data)?
        } else {
            let r = dims[0].0;
            if dims.iter().any(|d| d.0 != r) {
                return Err(Error::shape("concat", &shapes));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r * cols);
            for i in 0..r {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(i));
                }
            }
            Tensor::new(vec![r, cols], data)?
        };
        Ok(self.record(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Takes `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check("slice", &[a])?;
        let t = self.value(a);
        let (r, c) = t.dims2("slice")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(Error::InvalidOp {
                op: "slice",
                msg: format!(
                    "range {start}..{} on axis {axis} of {:?}",
                    start + len,
                    t.shape()
                ),
            });
        }
        let out = if axis == 0 {
            Tensor::new(
                vec![len, c],
                t.data()[start * c..(start + len) * c].to_vec(),
            )?
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&t.row(i)[start..start + len]);
            }
            Tensor::new(vec![r, len], data)?
        };
        Ok(self.record(
            out,
            Op::Slice {
                input: a,
                axis,
                start,
            },
            &[a],
        ))
    }

    /// Mean negative log-likelihood of `targets`, given as `(row, class)`
    /// pairs into a `(rows, classes)` logit matrix. Rows not named do not
    /// contribute.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Result<Var> {
        self.check("cross_entropy", &[logits])?;
        let t = self.value(logits);
        let (r, c) = t.dims2("cross_entropy")?;
        if targets.is_empty() {
            return Err(Error::InvalidOp {
                op: "cross_entropy",
                msg: "no target positions".into(),
            });
        }
        let mut probs = Vec::with_capacity(targets.len() * c);
        let mut loss = 0.0;
        for &(row, class) in targets {
            if row >= r || class >= c {
                return Err(Error::InvalidOp {
                    op: "cross_entropy",
                    msg: format!("target ({row}, {class}) outside {r}x{c}"),
                });
            }
            let x = t.row(row);
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = x.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + z.ln();
            loss += log_z - x[class];
            probs.extend(x.iter().map(|v| (v - log_z).exp()));
        }
        loss /= targets.len() as f64;
        Ok(self.record(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check("sum", &[a])?;
        let s = self.value(a).sum();
        Ok(self.record(Tensor::scalar(s), Op::Sum(a), &[a]))
    }

    /// Propagates `d loss / d node` backwards through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check("backward", &[loss])?;
        if !self.value(loss).is_scalar() {
            return Err(Error::InvalidOp {
                op: "backward",
                msg: format!(
                    "loss must be scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            let keep = matches!(node.op, Op::Leaf) && node.requires_grad;
            if keep {
                if grads[idx].is_none() {
                    grads[idx] = Some(Tensor::zeros(node.value.shape()));
                }
            } else {
                grads[idx] = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node<'_>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let wants = |v: Var| self.nodes[v.index].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if wants(*a) {
                    let acc = grad_slot(grads, *a, ta.shape());
                    matmul_nt_into(g.data(), tb.data(), acc.data_mut(), m, n, k);
                }
                if wants(*b) {
                    let acc = grad_slot(grads, *b, tb.shape());
                    matmul_tn_into(ta.data(), g.data(), acc.data_mut(), m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        grad_slot(grads, v, g.shape()).add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if wants(v) {
                        let o = self.value(other);
                        let acc = grad_slot(grads, v, g.shape());
                        for ((x, &gi), &oi) in acc.data_mut().iter_mut().zip(g.data()).zip(o.data())
                        {
                            *x += gi * oi;
                        }
                    }
                }
            }
            Op::Scale(a, f) => {
                if wants(*a) {
                    let acc = grad_slot(grads, *a, g.shape());
                    for (x, &gi) in acc.data_mut().iter_mut().zip(g.data()) {
                        *x += f * gi;
                    }
                }
            }
            Op::Softmax(a) => {
                if wants(*a) {
                    let y = &node.value;
                    let c = y.shape()[1];
                    let acc = grad_slot(grads, *a, y.shape());
                    let out = acc.data_mut();
                    for i in 0..y.shape()[0] {
                        let yr = y.row(i);
                        let gr = &g.data()[i * c..(i + 1) * c];
                        let dotp: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            out[i * c + j] += yr[j] * (gr[j] - dotp);
                        }
                    }
                }
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let tg = self.value(*gamma);
                let (r, d) = (g.shape()[0], g.shape()[1]);
                if wants(*gamma) {
                    let acc = grad_slot(grads, *gamma, tg.shape());
                    let out = acc.data_mut();
                    for i in 0..r {
                        for j in 0..d {
                            out[j] += g.data()[i * d + j] * xhat[i * d + j];
                        }
                    }
                }
                if wants(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    let acc = grad_slot(grads, *beta, &shape);
                    let out = acc.data_mut();
                    for i in 0..r {
                        for j in 0..d {
                            out[j] += g.data()[i * d + j];
                        }
                    }
                }
                if wants(*input) {
                    let acc = grad_slot(grads, *input, g.shape());
                    let out = acc.data_mut();
                    let mut dxhat = vec![0.0; d];
                    for i in 0..r {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..d {
                            dxhat[j] = g.data()[i * d + j] * tg.data()[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xhat[i * d + j];
                        }
                        mean_d /= d as f64;
                        mean_dx /= d as f64;
                        for j in 0..d {
                            out[i * d + j] +=
                                rstd[i] * (dxhat[j] - mean_d - xhat[i * d + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                if wants(*a) {
                    let x = self.value(*a);
                    let acc = grad_slot(grads, *a, g.shape());
                    for ((o, &gi), &xi) in acc.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *o += gi * gelu_derivative(xi);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if wants(*table) {
                    let shape = self.value(*table).shape().to_vec();
                    let d = shape[1];
                    let acc = grad_slot(grads, *table, &shape);
                    let out = acc.data_mut();
                    for (t, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            out[id * d + j] += g.data()[t * d + j];
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let gt = g.transpose().expect("rank-2 gradient");
                    grad_slot(grads, *a, gt.shape()).add_assign(&gt);
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    let shape = self.value(*a).shape().to_vec();
                    let acc = grad_slot(grads, *a, &shape);
                    for (o, &gi) in acc.data_mut().iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let cols = g.shape()[1];
                let mut offset = 0;
                for &v in inputs {
                    let shape = self.value(v).shape().to_vec();
                    let (r, c) = (shape[0], shape[1]);
                    if wants(v) {
                        let acc = grad_slot(grads, v, &shape);
                        let out = acc.data_mut();
                        for i in 0..r {
                            for j in 0..c {
                                let src = if *axis == 0 {
                                    (offset + i) * cols + j
                                } else {
                                    i * cols + offset + j
                                };
                                out[i * c + j] += g.data()[src];
                            }
                        }
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Slice { input, axis, start } => {
                if wants(*input) {
                    let shape = self.value(*input).shape().to_vec();
                    let cols = shape[1];
                    let (gr, gc) = (g.shape()[0], g.shape()[1]);
                    let acc = grad_slot(grads, *input, &shape);
                    let out = acc.data_mut();
                    for i in 0..gr {
                        for j in 0..gc {
                            let dst = if *axis == 0 {
                                (start + i) * cols + j
                            } else {
                                i * cols + start + j
                            };
                            out[dst] += g.data()[i * gc + j];
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if wants(*logits) {
                    let shape = self.value(*logits).shape().to_vec();
                    let c = shape[1];
                    let scale = g.data()[0] / targets.len() as f64;
                    let acc = grad_slot(grads, *logits, &shape);
                    let out = acc.data_mut();
                    for (k, &(row, class)) in targets.iter().enumerate() {
                        let p = &probs[k * c..(k + 1) * c];
                        for j in 0..c {
                            out[row * c + j] += scale * p[j];
                        }
                        out[row * c + class] -= scale;
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    let gv = g.data()[0];
                    let acc = grad_slot(grads, *a, self.value(*a).shape());
                    for o in acc.data_mut() {
                        *o += gv;
                    }
                }
            }
        }
    }
}

fn grad_slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
    grads[v.index].get_or_insert_with(|| Tensor::zeros(shape))
}

/// Gradients of a scalar loss with respect to every leaf that requires one.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a `requires_grad` leaf. Leaves that did not take part in
    /// the loss get zeros.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index).and_then(|g| g.take())
    }
}

pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(x) + x * pdf
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}
