//! Reverse-mode differentiation over an eagerly evaluated operation record.
//!
//! A [`Graph`] owns a flat arena of nodes. Building an op validates shapes,
//! computes the forward value immediately, and appends a record; nodes are
//! therefore already in topological order and the backward pass is a single
//! reverse sweep that visits each node exactly once. A graph and its arrays
//! are confined to one execution context; independent graphs may run in
//! parallel contexts.

use super::kernels::{self, LstmSaved};
use super::ndarray::NdArray;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

enum Op {
    Leaf,
    /// out = a @ b for 2-D operands.
    Matmul { a: NodeId, b: NodeId },
    /// out = x + bias, bias broadcast over leading rows. x: [r, c], bias: [c].
    AddBias { x: NodeId, bias: NodeId },
    /// out = x + bias per channel. x: [B, C, L], bias: [C].
    AddChanBias { x: NodeId, bias: NodeId },
    /// Elementwise sum of two same-shape arrays.
    Add { a: NodeId, b: NodeId },
    /// out = k * x.
    Scale { x: NodeId, k: f64 },
    Act { x: NodeId, kind: Activation },
    Conv1d {
        x: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
    },
    MaxPool1d {
        x: NodeId,
        window: usize,
        argmax: Vec<usize>,
    },
    /// Same data, new shape.
    Reshape { x: NodeId },
    /// 2-D transpose.
    Transpose { x: NodeId },
    /// Scalar sum of all elements.
    SumAll { x: NodeId },
    /// Scalar mean of squared differences.
    MseLoss { a: NodeId, b: NodeId },
    /// Scalar mean of absolute differences.
    L1Loss { a: NodeId, b: NodeId },
    /// Fused two-matmul LSTM layer over a whole time-major sequence.
    LstmLayer {
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
        saved: LstmSaved,
    },
}

struct Node {
    op: Op,
    value: NdArray,
    requires_grad: bool,
}

/// Gradients from one backward pass, indexed by `NodeId`.
pub struct Gradients {
    grads: Vec<Option<NdArray>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the given node, if any flowed to it.
    pub fn get(&self, id: NodeId) -> Option<&NdArray> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<NdArray> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        // Training allocates and frees tens of megabytes of activation
        // buffers per step; keep freed chunks in the malloc arena instead of
        // returning them to the kernel, so the pages stay faulted in.
        static ALLOC_TUNE: std::sync::Once = std::sync::Once::new();
        ALLOC_TUNE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        });
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &NdArray {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: NdArray, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// A trainable leaf; `backward` will produce a gradient for it.
    pub fn param(&mut self, value: NdArray) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A constant leaf; no gradient is collected for it.
    pub fn input(&mut self, value: NdArray) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    // ── Operations ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = NdArray::zeros(vec![m, n]);
        kernels::mm_acc(
            self.value(a).data(),
            self.value(b).data(),
            m,
            k,
            n,
            out.data_mut(),
        );
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Matmul { a, b }, out, rg))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        if sb.len() != 1 || sx.is_empty() || *sx.last().unwrap() != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let cols = sb[0];
        let rows = self.value(x).len() / cols;
        let mut out = self.value(x).clone();
        kernels::add_bias_rows(out.data_mut(), self.value(bias).data(), rows);
        let rg = self.requires(x) || self.requires(bias);
        Ok(self.push(Op::AddBias { x, bias }, out, rg))
    }

    pub fn add_chan_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.value(x).shape().to_vec(), self.value(bias).shape());
        if sx.len() != 3 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "add_chan_bias",
                lhs: sx,
                rhs: sb.to_vec(),
            });
        }
        let (b, c, l) = (sx[0], sx[1], sx[2]);
        let mut out = self.value(x).clone();
        {
            let data = out.data_mut();
            let bias_v = self.value(bias).data().to_vec();
            for bi in 0..b {
                for ci in 0..c {
                    let row = &mut data[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for v in row.iter_mut() {
                        *v += bias_v[ci];
                    }
                }
            }
        }
        let rg = self.requires(x) || self.requires(bias);
        Ok(self.push(Op::AddChanBias { x, bias }, out, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add { a, b }, out, rg))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let mut out = self.value(x).clone();
        for v in out.data_mut().iter_mut() {
            *v *= k;
        }
        let rg = self.requires(x);
        self.push(Op::Scale { x, k }, out, rg)
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let mut out = self.value(x).clone();
        match kind {
            Activation::Sigmoid => {
                for v in out.data_mut().iter_mut() {
                    *v = kernels::sigmoid(*v);
                }
            }
            Activation::Tanh => {
                for v in out.data_mut().iter_mut() {
                    *v = v.tanh();
                }
            }
            Activation::Relu => {
                for v in out.data_mut().iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        let rg = self.requires(x);
        self.push(Op::Act { x, kind }, out, rg)
    }

    /// 1-D cross-correlation with zero padding. `x` is `[C_in, L]` or
    /// `[B, C_in, L]`; `kernel` is `[C_out, C_in, K]`. Output length is
    /// `(L + 2·padding − K) / stride + 1`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let sk = self.value(kernel).shape().to_vec();
        if sk.len() != 3 || (sx.len() != 2 && sx.len() != 3) {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: sx,
                rhs: sk,
            });
        }
        let (batch, c_in, len) = if sx.len() == 2 {
            (1, sx[0], sx[1])
        } else {
            (sx[0], sx[1], sx[2])
        };
        let (c_out, kc_in, k) = (sk[0], sk[1], sk[2]);
        if kc_in != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: sx,
                rhs: sk,
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv1d", "stride must be positive"));
        }
        if len + 2 * padding < k {
            return Err(Error::invalid(
                "conv1d",
                format!("kernel {k} longer than padded input {}", len + 2 * padding),
            ));
        }
        let out_len = kernels::conv1d_out_len(len, k, stride, padding);
        let out_shape = if sx.len() == 2 {
            vec![c_out, out_len]
        } else {
            vec![batch, c_out, out_len]
        };
        let mut out = NdArray::zeros(out_shape);
        kernels::conv1d_forward(
            self.value(x).data(),
            self.value(kernel).data(),
            batch,
            c_in,
            len,
            c_out,
            k,
            stride,
            padding,
            out.data_mut(),
        );
        let rg = self.requires(x) || self.requires(kernel);
        Ok(self.push(
            Op::Conv1d {
                x,
                kernel,
                stride,
                padding,
            },
            out,
            rg,
        ))
    }

    /// Non-overlapping max pooling over the last axis; remainder samples are
    /// dropped. Returns the pooled node; the argmax indices live in the op
    /// record and route the gradient.
    pub fn maxpool1d(&mut self, x: NodeId, window: usize) -> Result<NodeId> {
        if window == 0 {
            return Err(Error::invalid("maxpool1d", "window must be positive"));
        }
        let sx = self.value(x).shape().to_vec();
        if sx.is_empty() {
            return Err(Error::invalid("maxpool1d", "input must have a last axis"));
        }
        let len = *sx.last().unwrap();
        let out_len = len / window;
        if out_len == 0 {
            return Err(Error::invalid(
                "maxpool1d",
                format!("window {window} exceeds input length {len}"),
            ));
        }
        let rows = self.value(x).len() / len;
        let mut out_shape = sx.clone();
        *out_shape.last_mut().unwrap() = out_len;
        let mut out = NdArray::zeros(out_shape);
        let mut argmax = vec![0usize; rows * out_len];
        kernels::maxpool1d_forward(
            self.value(x).data(),
            rows,
            len,
            window,
            out.data_mut(),
            &mut argmax,
        );
        let rg = self.requires(x);
        Ok(self.push(Op::MaxPool1d { x, window, argmax }, out, rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.requires(x);
        Ok(self.push(Op::Reshape { x }, out, rg))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 2 {
            return Err(Error::invalid("transpose", "expects a 2-D array"));
        }
        let (r, c) = (sx[0], sx[1]);
        let mut out = NdArray::zeros(vec![c, r]);
        let src = self.value(x).data();
        {
            let dst = out.data_mut();
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let rg = self.requires(x);
        Ok(self.push(Op::Transpose { x }, out, rg))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.requires(x);
        self.push(Op::SumAll { x }, NdArray::scalar(s), rg)
    }

    /// Mean over all elements of the squared difference.
    pub fn mse_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "mse_loss",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::MseLoss { a, b }, NdArray::scalar(s / n), rg))
    }

    /// Mean over all elements of the absolute difference.
    pub fn l1_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "l1_loss",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y).abs())
            .sum();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::L1Loss { a, b }, NdArray::scalar(s / n), rg))
    }

    /// One LSTM layer over a time-major sequence; see
    /// [`kernels::lstm_forward`] for the layout contract.
    /// x: [T, B, I], w_ih: [I, 4H], w_hh: [H, 4H], bias: [4H] → [T, B, H].
    pub fn lstm_layer(
        &mut self,
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
    ) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let si = self.value(w_ih).shape().to_vec();
        let sh = self.value(w_hh).shape().to_vec();
        let sb = self.value(bias).shape().to_vec();
        if sx.len() != 3 || si.len() != 2 || sh.len() != 2 || sb.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "lstm_layer",
                lhs: sx,
                rhs: si,
            });
        }
        let (steps, batch, input) = (sx[0], sx[1], sx[2]);
        let hidden = sh[0];
        if si != [input, 4 * hidden] || sh != [hidden, 4 * hidden] || sb != [4 * hidden] {
            return Err(Error::ShapeMismatch {
                op: "lstm_layer",
                lhs: si,
                rhs: sh,
            });
        }
        let mut out = NdArray::zeros(vec![steps, batch, hidden]);
        let mut saved = LstmSaved::zeros(steps, batch, hidden);
        kernels::lstm_forward(
            self.value(x).data(),
            self.value(w_ih).data(),
            self.value(w_hh).data(),
            self.value(bias).data(),
            steps,
            batch,
            input,
            hidden,
            out.data_mut(),
            Some(&mut saved),
        );
        let rg = self.requires(x)
            || self.requires(w_ih)
            || self.requires(w_hh)
            || self.requires(bias);
        Ok(self.push(
            Op::LstmLayer {
                x,
                w_ih,
                w_hh,
                bias,
                saved,
            },
            out,
            rg,
        ))
    }

    // ── Backward ─────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node with seed gradient 1.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        self.backward_seeded(loss, 1.0)
    }

    /// Reverse sweep with an explicit seed, equivalent to differentiating
    /// `seed * loss`. Useful for weighted loss terms evaluated in separate
    /// graphs.
    pub fn backward_seeded(&mut self, loss: NodeId, seed: f64) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!(
                    "loss must be scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<NdArray>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(NdArray::scalar(seed));

        for id in (0..=loss).rev() {
            if grads[id].is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.backward_op(id, &g, &mut grads);
            // Leaves keep their gradient; interior gradients are dropped once
            // consumed to bound memory.
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<NdArray>], id: NodeId, delta: &[f64]) {
        if !self.nodes[id].requires_grad {
            return;
        }
        let slot = &mut grads[id];
        match slot {
            Some(arr) => {
                for (o, &d) in arr.data_mut().iter_mut().zip(delta) {
                    *o += d;
                }
            }
            None => {
                let mut arr = NdArray::zeros(self.nodes[id].value.shape().to_vec());
                arr.data_mut().copy_from_slice(delta);
                *slot = Some(arr);
            }
        }
    }

    fn grad_buf(&self, grads: &mut Vec<Option<NdArray>>, id: NodeId) -> Option<NdArray> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        Some(
            grads[id]
                .take()
                .unwrap_or_else(|| NdArray::zeros(self.nodes[id].value.shape().to_vec())),
        )
    }

    fn backward_op(&self, id: NodeId, g: &NdArray, grads: &mut Vec<Option<NdArray>>) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let sa = self.nodes[a].value.shape();
                let sb = self.nodes[b].value.shape();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if let Some(mut da) = self.grad_buf(grads, a) {
                    // dA = dOut @ B^T
                    kernels::mm_bt_acc(
                        g.data(),
                        self.nodes[b].value.data(),
                        m,
                        n,
                        k,
                        da.data_mut(),
                    );
                    grads[a] = Some(da);
                }
                if let Some(mut db) = self.grad_buf(grads, b) {
                    // dB = A^T @ dOut
                    kernels::mm_at_acc(
                        self.nodes[a].value.data(),
                        g.data(),
                        m,
                        k,
                        n,
                        db.data_mut(),
                    );
                    grads[b] = Some(db);
                }
            }
            Op::AddBias { x, bias } => {
                let (x, bias) = (*x, *bias);
                self.accumulate(grads, x, g.data());
                if self.nodes[bias].requires_grad {
                    let cols = self.nodes[bias].value.len();
                    let rows = g.len() / cols;
                    let mut db = self.grad_buf(grads, bias).unwrap();
                    kernels::colsum_acc(g.data(), rows, db.data_mut());
                    grads[bias] = Some(db);
                }
            }
            Op::AddChanBias { x, bias } => {
                let (x, bias) = (*x, *bias);
                self.accumulate(grads, x, g.data());
                if self.nodes[bias].requires_grad {
                    let s = self.nodes[x].value.shape();
                    let (b, c, l) = (s[0], s[1], s[2]);
                    let mut db = self.grad_buf(grads, bias).unwrap();
                    {
                        let dbd = db.data_mut();
                        for bi in 0..b {
                            for ci in 0..c {
                                let row = &g.data()[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                                dbd[ci] += row.iter().sum::<f64>();
                            }
                        }
                    }
                    grads[bias] = Some(db);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.data());
                self.accumulate(grads, *b, g.data());
            }
            Op::Scale { x, k } => {
                if self.nodes[*x].requires_grad {
                    let scaled: Vec<f64> = g.data().iter().map(|v| v * k).collect();
                    self.accumulate(grads, *x, &scaled);
                }
            }
            Op::Act { x, kind } => {
                if !self.nodes[*x].requires_grad {
                    return;
                }
                let y = self.nodes[id].value.data();
                let d: Vec<f64> = match kind {
                    Activation::Sigmoid => g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                        .collect(),
                    Activation::Tanh => g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&gv, &yv)| gv * (1.0 - yv * yv))
                        .collect(),
                    Activation::Relu => g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&gv, &yv)| if yv > 0.0 { gv } else { 0.0 })
                        .collect(),
                };
                self.accumulate(grads, *x, &d);
            }
            Op::Conv1d {
                x,
                kernel,
                stride,
                padding,
            } => {
                let (x, kernel) = (*x, *kernel);
                let sx = self.nodes[x].value.shape();
                let sk = self.nodes[kernel].value.shape();
                let (batch, c_in, len) = if sx.len() == 2 {
                    (1, sx[0], sx[1])
                } else {
                    (sx[0], sx[1], sx[2])
                };
                let (c_out, _, k) = (sk[0], sk[1], sk[2]);
                let mut dx = self.grad_buf(grads, x);
                let mut dw = self.grad_buf(grads, kernel);
                kernels::conv1d_backward(
                    self.nodes[x].value.data(),
                    self.nodes[kernel].value.data(),
                    g.data(),
                    batch,
                    c_in,
                    len,
                    c_out,
                    k,
                    *stride,
                    *padding,
                    dx.as_mut().map(|d| d.data_mut()),
                    dw.as_mut().map(|d| d.data_mut()),
                );
                if let Some(dx) = dx {
                    grads[x] = Some(dx);
                }
                if let Some(dw) = dw {
                    grads[kernel] = Some(dw);
                }
            }
            Op::MaxPool1d { x, window, argmax } => {
                if !self.nodes[*x].requires_grad {
                    return;
                }
                let sx = self.nodes[*x].value.shape();
                let len = *sx.last().unwrap();
                let rows = self.nodes[*x].value.len() / len;
                let mut dx = self.grad_buf(grads, *x).unwrap();
                kernels::maxpool1d_backward(g.data(), argmax, rows, len, *window, dx.data_mut());
                grads[*x] = Some(dx);
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, g.data());
            }
            Op::Transpose { x } => {
                if !self.nodes[*x].requires_grad {
                    return;
                }
                let s = self.nodes[id].value.shape();
                let (r, c) = (s[0], s[1]);
                let mut d = vec![0.0; g.len()];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g.data()[i * c + j];
                    }
                }
                self.accumulate(grads, *x, &d);
            }
            Op::SumAll { x } => {
                if !self.nodes[*x].requires_grad {
                    return;
                }
                let gv = g.item();
                let d = vec![gv; self.nodes[*x].value.len()];
                self.accumulate(grads, *x, &d);
            }
            Op::MseLoss { a, b } => {
                let gv = g.item();
                let n = self.nodes[*a].value.len() as f64;
                let scale = 2.0 * gv / n;
                let av = self.nodes[*a].value.data();
                let bv = self.nodes[*b].value.data();
                if self.nodes[*a].requires_grad {
                    let d: Vec<f64> = av.iter().zip(bv).map(|(&x, &y)| scale * (x - y)).collect();
                    self.accumulate(grads, *a, &d);
                }
                if self.nodes[*b].requires_grad {
                    let d: Vec<f64> = av.iter().zip(bv).map(|(&x, &y)| -scale * (x - y)).collect();
                    self.accumulate(grads, *b, &d);
                }
            }
            Op::L1Loss { a, b } => {
                let gv = g.item();
                let n = self.nodes[*a].value.len() as f64;
                let scale = gv / n;
                let av = self.nodes[*a].value.data();
                let bv = self.nodes[*b].value.data();
                let sign = |x: f64, y: f64| {
                    if x > y {
                        1.0
                    } else if x < y {
                        -1.0
                    } else {
                        0.0
                    }
                };
                if self.nodes[*a].requires_grad {
                    let d: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .map(|(&x, &y)| scale * sign(x, y))
                        .collect();
                    self.accumulate(grads, *a, &d);
                }
                if self.nodes[*b].requires_grad {
                    let d: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .map(|(&x, &y)| -scale * sign(x, y))
                        .collect();
                    self.accumulate(grads, *b, &d);
                }
            }
            Op::LstmLayer {
                x,
                w_ih,
                w_hh,
                bias,
                saved,
            } => {
                let (x, w_ih_id, w_hh_id, bias_id) = (*x, *w_ih, *w_hh, *bias);
                let sx = self.nodes[x].value.shape();
                let (steps, batch, input) = (sx[0], sx[1], sx[2]);
                let hidden = self.nodes[w_hh_id].value.shape()[0];
                let mut dx = self.grad_buf(grads, x);
                let mut dwi = self
                    .grad_buf(grads, w_ih_id)
                    .unwrap_or_else(|| NdArray::zeros(vec![input, 4 * hidden]));
                let mut dwh = self
                    .grad_buf(grads, w_hh_id)
                    .unwrap_or_else(|| NdArray::zeros(vec![hidden, 4 * hidden]));
                let mut db = self
                    .grad_buf(grads, bias_id)
                    .unwrap_or_else(|| NdArray::zeros(vec![4 * hidden]));
                kernels::lstm_backward(
                    self.nodes[x].value.data(),
                    self.nodes[id].value.data(),
                    saved,
                    self.nodes[w_ih_id].value.data(),
                    self.nodes[w_hh_id].value.data(),
                    g.data(),
                    steps,
                    batch,
                    input,
                    hidden,
                    dx.as_mut().map(|d| d.data_mut()),
                    dwi.data_mut(),
                    dwh.data_mut(),
                    db.data_mut(),
                );
                if let Some(dx) = dx {
                    grads[x] = Some(dx);
                }
                if self.nodes[w_ih_id].requires_grad {
                    grads[w_ih_id] = Some(dwi);
                }
                if self.nodes[w_hh_id].requires_grad {
                    grads[w_hh_id] = Some(dwh);
                }
                if self.nodes[bias_id].requires_grad {
                    grads[bias_id] = Some(db);
                }
            }
        }
    }
}
