//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass (define-by-run).
//! Calling [`Tape::backward`] on a scalar result replays the recorded
//! operations once, in reverse order, accumulating gradients for every node
//! that can reach a trainable leaf. The tape is single-use per forward pass:
//! a second backward without rebuilding the graph is an error.
//!
//! Ops keep their backward rules auditable by avoiding broadcasting beyond
//! bias-vector addition over leading axes.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Aggregation mode for [`Tape::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Scale(usize, f64),
    Matmul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
        rows: usize,
        cols: usize,
    },
    Conv1d {
        x: usize,
        w: usize,
        dilation: usize,
        batch: usize,
        len_in: usize,
        c_in: usize,
        taps: usize,
        c_out: usize,
    },
    Reduce {
        x: usize,
        axis: usize,
        op: ReduceOp,
    },
    ReduceAll {
        x: usize,
        op: ReduceOp,
    },
    Reshape(usize),
    Narrow {
        x: usize,
        axis: usize,
        start: usize,
        len: usize,
    },
    Stack0(Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    param: Option<ParamId>,
}

/// Recorded computation graph plus, after backward, per-node gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all recorded nodes and gradients.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a constant input. It never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, None)
    }

    /// Record a differentiable input (used by tests and gradient checks).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, None)
    }

    /// Record a parameter leaf. Gradient flows only if the parameter is
    /// trainable, and is written back by [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Leaf, p.trainable, Some(id))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass w.r.t. node `v`, if it received one.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, param: Option<ParamId>) -> Var {
        debug_assert!(value.is_finite(), "non-finite tensor recorded on tape");
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param,
        });
        Var(id)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn binary_same_shape(&mut self, op_name: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: op_name,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Add(a.0, b.0), needs, None))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Sub(a.0, b.0), needs, None))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(data, Op::Mul(a.0, b.0), needs, None))
    }

    /// ReLU; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let data = map(self.value(x), |v| v.max(0.0));
        let needs = self.needs(x);
        self.push(data, Op::Relu(x.0), needs, None)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = map(self.value(x), |v| 1.0 / (1.0 + (-v).exp()));
        let needs = self.needs(x);
        self.push(data, Op::Sigmoid(x.0), needs, None)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let data = map(self.value(x), |v| v.tanh());
        let needs = self.needs(x);
        self.push(data, Op::Tanh(x.0), needs, None)
    }

    /// Absolute value; the subgradient at exactly 0 is 0.
    pub fn abs(&mut self, x: Var) -> Var {
        let data = map(self.value(x), |v| v.abs());
        let needs = self.needs(x);
        self.push(data, Op::Abs(x.0), needs, None)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data = map(self.value(x), |v| v * c);
        let needs = self.needs(x);
        self.push(data, Op::Scale(x.0, c), needs, None)
    }

    /// Matrix product of two rank-2 tensors, `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::from_vec(vec![m, n], data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            out,
            Op::Matmul {
                a: a.0,
                b: b.0,
                m,
                k,
                n,
            },
            needs,
            None,
        ))
    }

    /// Add a bias vector of length `c` to every length-`c` row of `x`
    /// (broadcast over all leading axes).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        let cols = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != cols {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let rows = self.value(x).len() / cols;
        let mut data = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for r in 0..rows {
            for (v, bv) in data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *v += bv;
            }
        }
        let out = Tensor::from_vec(sx.to_vec(), data)?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(
            out,
            Op::AddBias {
                x: x.0,
                bias: bias.0,
                rows,
                cols,
            },
            needs,
            None,
        ))
    }

    /// Valid (no-padding) causal convolution along the middle axis.
    ///
    /// `x: [batch, len, c_in]`, `w: [taps, c_in, c_out]`, output
    /// `[batch, len - (taps-1)*dilation, c_out]`.
    pub fn causal_dilated_conv1d(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        let (sx, sw) = (self.value(x).shape(), self.value(w).shape());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(Error::ShapeMismatch {
                op: "causal_dilated_conv1d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        if dilation == 0 {
            return Err(Error::Config("conv dilation must be >= 1".into()));
        }
        let (batch, len_in, c_in) = (sx[0], sx[1], sx[2]);
        let (taps, c_out) = (sw[0], sw[2]);
        let receptive = (taps - 1) * dilation + 1;
        if len_in < receptive {
            return Err(Error::WindowTooShort {
                len: len_in,
                receptive_field: receptive,
            });
        }
        let len_out = len_in - (taps - 1) * dilation;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; batch * len_out * c_out];
        for bi in 0..batch {
            for t in 0..len_out {
                let out_row = &mut out[(bi * len_out + t) * c_out..(bi * len_out + t + 1) * c_out];
                for j in 0..taps {
                    let x_row = &xd[(bi * len_in + t + j * dilation) * c_in..];
                    for i in 0..c_in {
                        let xv = x_row[i];
                        let w_row = &wd[(j * c_in + i) * c_out..(j * c_in + i + 1) * c_out];
                        for (o, wv) in out_row.iter_mut().zip(w_row) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(vec![batch, len_out, c_out], out)?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(
            out,
            Op::Conv1d {
                x: x.0,
                w: w.0,
                dilation,
                batch,
                len_in,
                c_in,
                taps,
                c_out,
            },
            needs,
            None,
        ))
    }

    /// Sum or mean along one axis. The reduced axis is removed from the
    /// shape; reducing a rank-1 tensor yields shape `[1]`.
    pub fn reduce(&mut self, x: Var, axis: usize, op: ReduceOp) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis {
                what: "reduce axis",
                value: axis,
                shape,
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..axis_len {
                let src = &xd[(o * axis_len + j) * inner..(o * axis_len + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if op == ReduceOp::Mean {
            let inv = 1.0 / axis_len as f64;
            for v in &mut out {
                *v *= inv;
            }
        }
        let mut out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &d)| d)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let out = Tensor::from_vec(out_shape, out)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Reduce { x: x.0, axis, op }, needs, None))
    }

    /// Sum of all entries, as a scalar of shape `[1]`.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(s),
            Op::ReduceAll {
                x: x.0,
                op: ReduceOp::Sum,
            },
            needs,
            None,
        )
    }

    /// Mean of all entries, as a scalar of shape `[1]`.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(
            Tensor::scalar(s / n),
            Op::ReduceAll {
                x: x.0,
                op: ReduceOp::Mean,
            },
            needs,
            None,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Reshape(x.0), needs, None))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis {
                what: "narrow axis",
                value: axis,
                shape,
            });
        }
        if start + len > shape[axis] || len == 0 {
            return Err(Error::InvalidAxis {
                what: "narrow range end",
                value: start + len,
                shape,
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = &xd[(o * axis_len + start) * inner..(o * axis_len + start + len) * inner];
            out[o * len * inner..(o + 1) * len * inner].copy_from_slice(src);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let out = Tensor::from_vec(out_shape, out)?;
        let needs = self.needs(x);
        Ok(self.push(
            out,
            Op::Narrow {
                x: x.0,
                axis,
                start,
                len,
            },
            needs,
            None,
        ))
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack0(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Config("stack0 of zero tensors".into()));
        }
        let shape = self.value(xs[0]).shape().to_vec();
        for &v in &xs[1..] {
            if self.value(v).shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "stack0",
                    lhs: shape,
                    rhs: self.value(v).shape().to_vec(),
                });
            }
        }
        let each = self.value(xs[0]).len();
        let mut data = Vec::with_capacity(each * xs.len());
        for &v in xs {
            data.extend_from_slice(self.value(v).data());
        }
        let mut out_shape = vec![xs.len()];
        out_shape.extend_from_slice(&shape);
        let out = Tensor::from_vec(out_shape, data)?;
        let needs = xs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            out,
            Op::Stack0(xs.iter().map(|v| v.0).collect()),
            needs,
            None,
        ))
    }

    /// Reverse sweep from a scalar loss node. Gradients become available via
    /// [`Tape::grad`] and [`Tape::accumulate_param_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Tape(
                "backward called twice without rebuilding the forward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Tape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, id: usize, g: &Tensor) {
        // Gradient accumulation skips inputs that cannot reach a trainable
        // leaf; their grads stay None.
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.accum(a, g.data(), 1.0);
                self.accum(b, g.data(), 1.0);
            }
            &Op::Sub(a, b) => {
                self.accum(a, g.data(), 1.0);
                self.accum(b, g.data(), -1.0);
            }
            &Op::Mul(a, b) => {
                if self.nodes[a].needs_grad {
                    let da = zip_vec(g.data(), self.nodes[b].value.data(), |gv, bv| gv * bv);
                    self.accum(a, &da, 1.0);
                }
                if self.nodes[b].needs_grad {
                    let db = zip_vec(g.data(), self.nodes[a].value.data(), |gv, av| gv * av);
                    self.accum(b, &db, 1.0);
                }
            }
            &Op::Relu(x) => {
                if self.nodes[x].needs_grad {
                    let dx = zip_vec(g.data(), self.nodes[x].value.data(), |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else {
                            0.0
                        }
                    });
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::Sigmoid(x) => {
                if self.nodes[x].needs_grad {
                    let dx = zip_vec(g.data(), self.nodes[id].value.data(), |gv, s| {
                        gv * s * (1.0 - s)
                    });
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::Tanh(x) => {
                if self.nodes[x].needs_grad {
                    let dx = zip_vec(g.data(), self.nodes[id].value.data(), |gv, t| {
                        gv * (1.0 - t * t)
                    });
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::Abs(x) => {
                if self.nodes[x].needs_grad {
                    let dx = zip_vec(g.data(), self.nodes[x].value.data(), |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else if xv < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    });
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::Scale(x, c) => {
                self.accum(x, g.data(), c);
            }
            &Op::Matmul { a, b, m, k, n } => {
                if self.nodes[a].needs_grad {
                    let da = matmul_bt_raw(g.data(), self.nodes[b].value.data(), m, n, k);
                    self.accum(a, &da, 1.0);
                }
                if self.nodes[b].needs_grad {
                    let db = matmul_at_raw(self.nodes[a].value.data(), g.data(), m, k, n);
                    self.accum(b, &db, 1.0);
                }
            }
            &Op::AddBias {
                x,
                bias,
                rows,
                cols,
            } => {
                self.accum(x, g.data(), 1.0);
                if self.nodes[bias].needs_grad {
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for (d, gv) in db.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                            *d += gv;
                        }
                    }
                    self.accum(bias, &db, 1.0);
                }
            }
            &Op::Conv1d {
                x,
                w,
                dilation,
                batch,
                len_in,
                c_in,
                taps,
                c_out,
            } => {
                let len_out = len_in - (taps - 1) * dilation;
                let gd = g.data();
                if self.nodes[x].needs_grad {
                    let wd = self.nodes[w].value.data();
                    let mut dx = vec![0.0; batch * len_in * c_in];
                    for bi in 0..batch {
                        for t in 0..len_out {
                            let g_row =
                                &gd[(bi * len_out + t) * c_out..(bi * len_out + t + 1) * c_out];
                            for j in 0..taps {
                                let dst = (bi * len_in + t + j * dilation) * c_in;
                                for i in 0..c_in {
                                    let w_row =
                                        &wd[(j * c_in + i) * c_out..(j * c_in + i + 1) * c_out];
                                    let mut s = 0.0;
                                    for (gv, wv) in g_row.iter().zip(w_row) {
                                        s += gv * wv;
                                    }
                                    dx[dst + i] += s;
                                }
                            }
                        }
                    }
                    self.accum(x, &dx, 1.0);
                }
                if self.nodes[w].needs_grad {
                    let xd = self.nodes[x].value.data();
                    let mut dw = vec![0.0; taps * c_in * c_out];
                    for bi in 0..batch {
                        for t in 0..len_out {
                            let g_row =
                                &gd[(bi * len_out + t) * c_out..(bi * len_out + t + 1) * c_out];
                            for j in 0..taps {
                                let x_row = &xd[(bi * len_in + t + j * dilation) * c_in..];
                                for i in 0..c_in {
                                    let xv = x_row[i];
                                    let dw_row =
                                        &mut dw[(j * c_in + i) * c_out..(j * c_in + i + 1) * c_out];
                                    for (d, gv) in dw_row.iter_mut().zip(g_row) {
                                        *d += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                    self.accum(w, &dw, 1.0);
                }
            }
            &Op::Reduce { x, axis, op } => {
                if self.nodes[x].needs_grad {
                    let shape = self.nodes[x].value.shape();
                    let outer: usize = shape[..axis].iter().product();
                    let axis_len = shape[axis];
                    let inner: usize = shape[axis + 1..].iter().product();
                    let scale = match op {
                        ReduceOp::Sum => 1.0,
                        ReduceOp::Mean => 1.0 / axis_len as f64,
                    };
                    let gd = g.data();
                    let mut dx = vec![0.0; self.nodes[x].value.len()];
                    for o in 0..outer {
                        let src = &gd[o * inner..(o + 1) * inner];
                        for j in 0..axis_len {
                            let dst =
                                &mut dx[(o * axis_len + j) * inner..(o * axis_len + j + 1) * inner];
                            for (d, gv) in dst.iter_mut().zip(src) {
                                *d += gv * scale;
                            }
                        }
                    }
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::ReduceAll { x, op } => {
                if self.nodes[x].needs_grad {
                    let n = self.nodes[x].value.len();
                    let scale = match op {
                        ReduceOp::Sum => 1.0,
                        ReduceOp::Mean => 1.0 / n as f64,
                    };
                    let dx = vec![g.data()[0] * scale; n];
                    self.accum(x, &dx, 1.0);
                }
            }
            &Op::Reshape(x) => {
                self.accum(x, g.data(), 1.0);
            }
            &Op::Narrow {
                x,
                axis,
                start,
                len,
            } => {
                if self.nodes[x].needs_grad {
                    let shape = self.nodes[x].value.shape();
                    let outer: usize = shape[..axis].iter().product();
                    let axis_len = shape[axis];
                    let inner: usize = shape[axis + 1..].iter().product();
                    let gd = g.data();
                    let mut dx = vec![0.0; self.nodes[x].value.len()];
                    for o in 0..outer {
                        let dst = &mut dx
                            [(o * axis_len + start) * inner..(o * axis_len + start + len) * inner];
                        let src = &gd[o * len * inner..(o + 1) * len * inner];
                        for (d, gv) in dst.iter_mut().zip(src) {
                            *d += gv;
                        }
                    }
                    self.accum(x, &dx, 1.0);
                }
            }
            Op::Stack0(xs) => {
                let xs = xs.clone();
                let each = self.nodes[xs[0]].value.len();
                for (idx, &x) in xs.iter().enumerate() {
                    if self.nodes[x].needs_grad {
                        let slice = g.data()[idx * each..(idx + 1) * each].to_vec();
                        self.accum(x, &slice, 1.0);
                    }
                }
            }
        }
    }

    fn accum(&mut self, target: usize, contribution: &[f64], scale: f64) {
        if !self.nodes[target].needs_grad {
            return;
        }
        let slot = &mut self.grads[target];
        match slot {
            Some(t) => {
                for (d, c) in t.data_mut().iter_mut().zip(contribution) {
                    *d += c * scale;
                }
            }
            None => {
                let shape = self.nodes[target].value.shape().to_vec();
                let data = contribution.iter().map(|c| c * scale).collect();
                *slot = Some(Tensor::from_vec(shape, data).expect("gradient shape"));
            }
        }
    }

    /// Add the gradients of every trainable parameter leaf on this tape into
    /// the corresponding [`ParamStore`] accumulators.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        if !self.backward_done {
            return Err(Error::Tape("no backward pass recorded".into()));
        }
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            let (Some(id), Some(g)) = (node.param, grad) else {
                continue;
            };
            let p = store.get_mut(id);
            for (d, gv) in p.gradient.data_mut().iter_mut().zip(g.data()) {
                *d += gv;
            }
        }
        Ok(())
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        .expect("shape preserved")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
    .expect("shape preserved")
}

fn zip_vec(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// `C[m,n] = A[m,k] * B[k,n]`, row-major.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `C[m,k] = G[m,n] * B^T` where `B` is `[k,n]` (used for dA = G * B^T).
fn matmul_bt_raw(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let c_row = &mut c[i * k..(i + 1) * k];
        for (p, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in g_row.iter().zip(b_row) {
                s += gv * bv;
            }
            *cv = s;
        }
    }
    c
}

/// `C[k,n] = A^T * G` where `A` is `[m,k]`, `G` is `[m,n]` (used for dB).
fn matmul_at_raw(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cv, gv) in c_row.iter_mut().zip(g_row) {
                *cv += av * gv;
            }
        }
    }
    c
}
