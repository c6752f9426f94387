//! Numeric kernels shared by the taped graph ops and the inference paths.
//!
//! Everything here is a pure function over `f64` slices with explicit
//! dimensions. Iteration orders are fixed, so results are bit-reproducible
//! for a given build on a given machine. Row slices use the `[start..][..n]`
//! form throughout; the explicit length lets the bounds checks hoist out of
//! the hot loops so they vectorize.

use super::vmath;

/// out = a @ b, a: [m,k], b: [k,n], out overwritten.
pub fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    mm_acc(a, b, m, k, n, out);
}

/// out += a @ b. ikj order with the reduction dimension unrolled four-wide
/// (each out element is loaded and stored once per four multiply-adds) and
/// the row dimension blocked so the streamed rows of `b` are reused across
/// a block of output rows. Blocking only interleaves independent output
/// rows; each element's accumulation order is unchanged.
pub fn mm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    const MB: usize = 8;
    let k4 = k / 4 * 4;
    let mut i0 = 0;
    while i0 < m {
        let ib = MB.min(m - i0);
        let mut p = 0;
        while p < k4 {
            let b0 = &b[p * n..][..n];
            let b1 = &b[(p + 1) * n..][..n];
            let b2 = &b[(p + 2) * n..][..n];
            let b3 = &b[(p + 3) * n..][..n];
            for i in i0..i0 + ib {
                let a_row = &a[i * k..][..k];
                let (a0, a1, a2, a3) = (a_row[p], a_row[p + 1], a_row[p + 2], a_row[p + 3]);
                let out_row = &mut out[i * n..][..n];
                for j in 0..n {
                    let p01 = a0.mul_add(b0[j], a1 * b1[j]);
                    let p23 = a2.mul_add(b2[j], a3 * b3[j]);
                    out_row[j] += p01 + p23;
                }
            }
            p += 4;
        }
        while p < k {
            let b_row = &b[p * n..][..n];
            for i in i0..i0 + ib {
                let a_ip = a[i * k + p];
                let out_row = &mut out[i * n..][..n];
                for j in 0..n {
                    out_row[j] = a_ip.mul_add(b_row[j], out_row[j]);
                }
            }
            p += 1;
        }
        i0 += ib;
    }
}

/// out += a @ b^T, a: [m,k], b: [n,k], out: [m,n]. Row-dot kernel, blocked
/// over output rows so each `b` row is streamed once per block.
pub fn mm_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    const MB: usize = 8;
    let mut i0 = 0;
    while i0 < m {
        let ib = MB.min(m - i0);
        for j in 0..n {
            let b_row = &b[j * k..][..k];
            for i in i0..i0 + ib {
                let a_row = &a[i * k..][..k];
                out[i * n + j] += dot(a_row, b_row);
            }
        }
        i0 += ib;
    }
}

/// out += a^T @ b, a: [k,m], b: [k,n], out: [m,n]. The reduction dimension
/// k is the outer loop (streaming `a` and `b` exactly once) in slabs of
/// eight, with `out` small enough to stay cache-resident.
pub fn mm_at_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let k8 = k / 8 * 8;
    let mut p = 0;
    while p < k8 {
        let a_slab = &a[p * m..][..8 * m];
        let b0 = &b[p * n..][..n];
        let b1 = &b[(p + 1) * n..][..n];
        let b2 = &b[(p + 2) * n..][..n];
        let b3 = &b[(p + 3) * n..][..n];
        let b4 = &b[(p + 4) * n..][..n];
        let b5 = &b[(p + 5) * n..][..n];
        let b6 = &b[(p + 6) * n..][..n];
        let b7 = &b[(p + 7) * n..][..n];
        for i in 0..m {
            let a0 = a_slab[i];
            let a1 = a_slab[m + i];
            let a2 = a_slab[2 * m + i];
            let a3 = a_slab[3 * m + i];
            let a4 = a_slab[4 * m + i];
            let a5 = a_slab[5 * m + i];
            let a6 = a_slab[6 * m + i];
            let a7 = a_slab[7 * m + i];
            let out_row = &mut out[i * n..][..n];
            for j in 0..n {
                let p01 = a0.mul_add(b0[j], a1 * b1[j]);
                let p23 = a2.mul_add(b2[j], a3 * b3[j]);
                let p45 = a4.mul_add(b4[j], a5 * b5[j]);
                let p67 = a6.mul_add(b6[j], a7 * b7[j]);
                out_row[j] += (p01 + p23) + (p45 + p67);
            }
        }
        p += 8;
    }
    while p < k {
        let a_row = &a[p * m..][..m];
        let b_row = &b[p * n..][..n];
        for i in 0..m {
            let a_pi = a_row[i];
            let out_row = &mut out[i * n..][..n];
            for j in 0..n {
                out_row[j] = a_pi.mul_add(b_row[j], out_row[j]);
            }
        }
        p += 1;
    }
}

/// Transposed copy, a: [rows, cols] -> out: [cols, rows].
pub fn transpose_into(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for i in 0..rows {
        let a_row = &a[i * cols..][..cols];
        for (j, &v) in a_row.iter().enumerate() {
            out[j * rows + i] = v;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators so the loop pipelines; summed in a fixed
    // order at the end.
    let n = a.len();
    let n4 = n / 4 * 4;
    let mut acc = [0.0f64; 4];
    let mut i = 0;
    while i < n4 {
        acc[0] = a[i].mul_add(b[i], acc[0]);
        acc[1] = a[i + 1].mul_add(b[i + 1], acc[1]);
        acc[2] = a[i + 2].mul_add(b[i + 2], acc[2]);
        acc[3] = a[i + 3].mul_add(b[i + 3], acc[3]);
        i += 4;
    }
    let mut tail = 0.0;
    while i < n {
        tail = a[i].mul_add(b[i], tail);
        i += 1;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// x: [rows, cols] += bias[cols] broadcast over rows.
pub fn add_bias_rows(x: &mut [f64], bias: &[f64], rows: usize) {
    let cols = bias.len();
    debug_assert_eq!(x.len(), rows * cols);
    for r in 0..rows {
        let row = &mut x[r * cols..][..cols];
        for j in 0..cols {
            row[j] += bias[j];
        }
    }
}

/// bias_grad[cols] += column sums of x: [rows, cols].
pub fn colsum_acc(x: &[f64], rows: usize, out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(x.len(), rows * cols);
    for r in 0..rows {
        let row = &x[r * cols..][..cols];
        for j in 0..cols {
            out[j] += row[j];
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ── 1-D convolution (cross-correlation) ─────────────────────────────

/// Output length of a 1-D convolution.
pub fn conv1d_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// Lowers a stride-1 padded input into patch rows:
/// cols[(b*out_len + l), ci*K + k] = x[b, ci, l + k - padding] (0 outside).
fn im2col(
    x: &[f64],
    batch: usize,
    c_in: usize,
    len: usize,
    kernel: usize,
    padding: usize,
    cols: &mut [f64],
) {
    let out_len = len + 2 * padding + 1 - kernel;
    let patch = c_in * kernel;
    debug_assert_eq!(cols.len(), batch * out_len * patch);
    cols.fill(0.0);
    for b in 0..batch {
        for ci in 0..c_in {
            let x_row = &x[(b * c_in + ci) * len..][..len];
            for k in 0..kernel {
                let off = k as isize - padding as isize;
                let lo = (-off).max(0) as usize;
                let hi = ((len as isize - off).min(out_len as isize)).max(0) as usize;
                let col = ci * kernel + k;
                for l in lo..hi {
                    cols[(b * out_len + l) * patch + col] = x_row[(l as isize + off) as usize];
                }
            }
        }
    }
}

/// Scatter-add of patch-row gradients back to input positions; the adjoint
/// of `im2col`.
fn col2im_acc(
    d_cols: &[f64],
    batch: usize,
    c_in: usize,
    len: usize,
    kernel: usize,
    padding: usize,
    dx: &mut [f64],
) {
    let out_len = len + 2 * padding + 1 - kernel;
    let patch = c_in * kernel;
    for b in 0..batch {
        for ci in 0..c_in {
            let dx_row = &mut dx[(b * c_in + ci) * len..][..len];
            for k in 0..kernel {
                let off = k as isize - padding as isize;
                let lo = (-off).max(0) as usize;
                let hi = ((len as isize - off).min(out_len as isize)).max(0) as usize;
                let col = ci * kernel + k;
                for l in lo..hi {
                    dx_row[(l as isize + off) as usize] += d_cols[(b * out_len + l) * patch + col];
                }
            }
        }
    }
}

/// cols [B*Lout, patch] @ w^T, written back to channel-major [B, Cout, Lout].
fn cols_matmul_to_channel_major(
    cols: &[f64],
    w: &[f64],
    batch: usize,
    out_len: usize,
    patch: usize,
    c_out: usize,
    out: &mut [f64],
) {
    let mut w_t = vec![0.0; patch * c_out];
    transpose_into(w, c_out, patch, &mut w_t);
    let mut out_bl = vec![0.0; batch * out_len * c_out];
    mm_acc(cols, &w_t, batch * out_len, patch, c_out, &mut out_bl);
    for b in 0..batch {
        for l in 0..out_len {
            let src = &out_bl[(b * out_len + l) * c_out..][..c_out];
            for co in 0..c_out {
                out[(b * c_out + co) * out_len + l] += src[co];
            }
        }
    }
}

/// Cross-correlation. x: [B,Cin,L], w: [Cout,Cin,K], result accumulated
/// into `out` (callers pass a zeroed buffer): out[B,Cout,Lout]. Stride 1
/// runs shifted axpy spans; other strides use a guarded direct loop.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out: &mut [f64],
) {
    let out_len = conv1d_out_len(len, kernel, stride, padding);
    debug_assert_eq!(out.len(), batch * c_out * out_len);
    for b in 0..batch {
        for co in 0..c_out {
            let out_row = &mut out[(b * c_out + co) * out_len..][..out_len];
            for ci in 0..c_in {
                let x_row = &x[(b * c_in + ci) * len..][..len];
                let w_row = &w[(co * c_in + ci) * kernel..][..kernel];
                for (k, &wv) in w_row.iter().enumerate() {
                    let off = k as isize - padding as isize;
                    if stride == 1 {
                        let lo = (-off).max(0) as usize;
                        let hi = ((len as isize - off).min(out_len as isize)).max(0) as usize;
                        if lo >= hi {
                            continue;
                        }
                        let xs = &x_row[(lo as isize + off) as usize..][..hi - lo];
                        let os = &mut out_row[lo..][..hi - lo];
                        for j in 0..os.len() {
                            os[j] = wv.mul_add(xs[j], os[j]);
                        }
                    } else {
                        for (l, o) in out_row.iter_mut().enumerate() {
                            let xi = (l * stride) as isize + off;
                            if xi >= 0 && (xi as usize) < len {
                                *o = wv.mul_add(x_row[xi as usize], *o);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of `conv1d_forward` w.r.t. input and kernel, accumulated into
/// whichever outputs are requested. Stride 1 reuses the im2col matmuls:
/// dw = dOut^T @ cols and dx = col2im(dOut @ w).
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    d_out: &[f64],
    batch: usize,
    c_in: usize,
    len: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
) {
    let out_len = conv1d_out_len(len, kernel, stride, padding);
    let patch = c_in * kernel;
    if stride == 1 && patch >= 128 {
        // Wide patches: the matmul route wins despite the lowering copies.
        // dOut: [B, Cout, Lout] -> [B*Lout, Cout].
        let mut d_bl = vec![0.0; batch * out_len * c_out];
        for b in 0..batch {
            for co in 0..c_out {
                let d_row = &d_out[(b * c_out + co) * out_len..][..out_len];
                for l in 0..out_len {
                    d_bl[(b * out_len + l) * c_out + co] = d_row[l];
                }
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            // Rebuilt rather than saved by the forward pass; the lowering is
            // cheap next to the matmuls.
            let mut cols = vec![0.0; batch * out_len * patch];
            im2col(x, batch, c_in, len, kernel, padding, &mut cols);
            mm_at_acc(&d_bl, &cols, batch * out_len, c_out, patch, dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let mut d_cols = vec![0.0; batch * out_len * patch];
            mm_acc(&d_bl, w, batch * out_len, c_out, patch, &mut d_cols);
            col2im_acc(&d_cols, batch, c_in, len, kernel, padding, dx);
        }
        return;
    }
    for b in 0..batch {
        for co in 0..c_out {
            let d_row = &d_out[(b * c_out + co) * out_len..][..out_len];
            for ci in 0..c_in {
                let x_row = &x[(b * c_in + ci) * len..][..len];
                let w_row = &w[(co * c_in + ci) * kernel..][..kernel];
                for k in 0..kernel {
                    let off = k as isize - padding as isize;
                    let wv = w_row[k];
                    if stride == 1 {
                        let lo = (-off).max(0) as usize;
                        let hi = ((len as isize - off).min(out_len as isize)).max(0) as usize;
                        if lo >= hi {
                            continue;
                        }
                        let span = hi - lo;
                        let ds = &d_row[lo..][..span];
                        let x_from = (lo as isize + off) as usize;
                        if let Some(dx) = dx.as_deref_mut() {
                            let dx_row = &mut dx[(b * c_in + ci) * len..][..len];
                            let dxs = &mut dx_row[x_from..][..span];
                            for j in 0..span {
                                dxs[j] = wv.mul_add(ds[j], dxs[j]);
                            }
                        }
                        if let Some(dw) = dw.as_deref_mut() {
                            let xs = &x_row[x_from..][..span];
                            dw[(co * c_in + ci) * kernel + k] += dot(ds, xs);
                        }
                    } else {
                        let mut acc = 0.0;
                        for (l, &d) in d_row.iter().enumerate() {
                            let xi = (l * stride) as isize + off;
                            if xi >= 0 && (xi as usize) < len {
                                let xi = xi as usize;
                                if let Some(dx) = dx.as_deref_mut() {
                                    let dxv = &mut dx[(b * c_in + ci) * len + xi];
                                    *dxv = wv.mul_add(d, *dxv);
                                }
                                acc = d.mul_add(x_row[xi], acc);
                            }
                        }
                        if let Some(dw) = dw.as_deref_mut() {
                            dw[(co * c_in + ci) * kernel + k] += acc;
                        }
                    }
                }
            }
        }
    }
}

// ── Max pooling ──────────────────────────────────────────────────────

/// Non-overlapping max pooling over the last axis. x: [rows, L] →
/// out: [rows, L/window]; trailing remainder samples are dropped. `argmax`
/// holds, per output element, the within-row index of the winning sample
/// (first occurrence on ties).
pub fn maxpool1d_forward(
    x: &[f64],
    rows: usize,
    len: usize,
    window: usize,
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let out_len = len / window;
    debug_assert_eq!(out.len(), rows * out_len);
    for r in 0..rows {
        let x_row = &x[r * len..][..len];
        let o_row = &mut out[r * out_len..][..out_len];
        let a_row = &mut argmax[r * out_len..][..out_len];
        for l in 0..out_len {
            let start = l * window;
            let mut best = x_row[start];
            let mut best_i = start;
            for i in start + 1..start + window {
                if x_row[i] > best {
                    best = x_row[i];
                    best_i = i;
                }
            }
            o_row[l] = best;
            a_row[l] = best_i;
        }
    }
}

/// Routes pooled gradients back to the argmax positions.
pub fn maxpool1d_backward(
    d_out: &[f64],
    argmax: &[usize],
    rows: usize,
    len: usize,
    window: usize,
    dx: &mut [f64],
) {
    let out_len = len / window;
    for r in 0..rows {
        let d_row = &d_out[r * out_len..][..out_len];
        let a_row = &argmax[r * out_len..][..out_len];
        let dx_row = &mut dx[r * len..][..len];
        for l in 0..out_len {
            dx_row[a_row[l]] += d_row[l];
        }
    }
}

// ── LSTM layer over a full sequence ──────────────────────────────────

/// Per-step state saved by an LSTM forward pass for backpropagation
/// through time.
pub struct LstmSaved {
    /// [T, B, 4H], post-activation, gate order i,f,g,o.
    pub gates: Vec<f64>,
    /// [T, B, H] cell states.
    pub cells: Vec<f64>,
    /// [T, B, H] tanh of the cell states (kept so the backward pass does no
    /// transcendental work).
    pub tanh_cells: Vec<f64>,
}

impl LstmSaved {
    pub fn zeros(steps: usize, batch: usize, hidden: usize) -> Self {
        LstmSaved {
            gates: vec![0.0; steps * batch * 4 * hidden],
            cells: vec![0.0; steps * batch * hidden],
            tanh_cells: vec![0.0; steps * batch * hidden],
        }
    }
}

/// Activates one step's gate buffer in place and advances cell/hidden state.
/// `gates` is [B,4H] pre-activation on entry, activated on exit.
fn lstm_cell_step(
    gates: &mut [f64],
    cells: &mut [f64],
    tanh_cells: &mut [f64],
    h_out: &mut [f64],
    batch: usize,
    hidden: usize,
) {
    let g4 = 4 * hidden;
    for b in 0..batch {
        let g_row = &mut gates[b * g4..][..g4];
        let (ifg, o_part) = g_row.split_at_mut(3 * hidden);
        let (if_part, g_part) = ifg.split_at_mut(2 * hidden);
        vmath::sigmoid_slice(if_part);
        vmath::tanh_slice(g_part);
        vmath::sigmoid_slice(o_part);
        let (i_part, f_part) = if_part.split_at(hidden);

        let c_row = &mut cells[b * hidden..][..hidden];
        let tc_row = &mut tanh_cells[b * hidden..][..hidden];
        let h_row = &mut h_out[b * hidden..][..hidden];
        for j in 0..hidden {
            c_row[j] = f_part[j].mul_add(c_row[j], i_part[j] * g_part[j]);
        }
        vmath::tanh_to(c_row, tc_row);
        for j in 0..hidden {
            h_row[j] = o_part[j] * tc_row[j];
        }
    }
}

/// Runs a single LSTM layer over a time-major sequence.
///
/// x_seq: [T,B,I], w_ih: [I,4H], w_hh: [H,4H], bias: [4H], h_seq out:
/// [T,B,H]. Initial hidden and cell states are zero. Gate order within
/// the 4H axis is input, forget, candidate, output. When `save` is set,
/// the per-step activations needed by `lstm_backward` are recorded; the
/// input projections for the whole sequence are then hoisted into one
/// large matmul and only the recurrent term stays per-step.
#[allow(clippy::too_many_arguments)]
pub fn lstm_forward(
    x_seq: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
    steps: usize,
    batch: usize,
    input: usize,
    hidden: usize,
    h_seq: &mut [f64],
    save: Option<&mut LstmSaved>,
) {
    let g4 = 4 * hidden;
    debug_assert_eq!(x_seq.len(), steps * batch * input);
    debug_assert_eq!(w_ih.len(), input * g4);
    debug_assert_eq!(w_hh.len(), hidden * g4);
    debug_assert_eq!(h_seq.len(), steps * batch * hidden);

    match save {
        Some(s) => {
            // Process the sequence in step blocks: project the block's
            // inputs with one matmul, then run the recurrence while the
            // block's gate buffer is still cache-hot.
            const BLOCK: usize = 64;
            let mut c_state = vec![0.0; batch * hidden];
            let mut t0 = 0;
            while t0 < steps {
                let t1 = (t0 + BLOCK).min(steps);
                let span = t1 - t0;
                let gates_block = &mut s.gates[t0 * batch * g4..][..span * batch * g4];
                let x_block = &x_seq[t0 * batch * input..][..span * batch * input];
                mm_acc(x_block, w_ih, span * batch, input, g4, gates_block);
                for t in t0..t1 {
                    let gates = &mut gates_block[(t - t0) * batch * g4..][..batch * g4];
                    if t > 0 {
                        // Recurrent term; h_{t-1} already lives in h_seq.
                        let (head, tail) = h_seq.split_at_mut(t * batch * hidden);
                        let h_prev = &head[(t - 1) * batch * hidden..][..batch * hidden];
                        mm_acc(h_prev, w_hh, batch, hidden, g4, gates);
                        add_bias_rows(gates, bias, batch);
                        lstm_cell_step(
                            gates,
                            &mut c_state,
                            &mut s.tanh_cells[t * batch * hidden..][..batch * hidden],
                            &mut tail[..batch * hidden],
                            batch,
                            hidden,
                        );
                    } else {
                        add_bias_rows(gates, bias, batch);
                        lstm_cell_step(
                            gates,
                            &mut c_state,
                            &mut s.tanh_cells[..batch * hidden],
                            &mut h_seq[..batch * hidden],
                            batch,
                            hidden,
                        );
                    }
                    s.cells[t * batch * hidden..][..batch * hidden].copy_from_slice(&c_state);
                }
                t0 = t1;
            }
        }
        None => {
            // Inference path: constant memory, per-step projections.
            let mut gates = vec![0.0; batch * g4];
            let mut c_state = vec![0.0; batch * hidden];
            let mut tc = vec![0.0; batch * hidden];
            let mut h_prev = vec![0.0; batch * hidden];
            for t in 0..steps {
                let x_t = &x_seq[t * batch * input..][..batch * input];
                mm(x_t, w_ih, batch, input, g4, &mut gates);
                mm_acc(&h_prev, w_hh, batch, hidden, g4, &mut gates);
                add_bias_rows(&mut gates, bias, batch);
                let h_t = &mut h_seq[t * batch * hidden..][..batch * hidden];
                lstm_cell_step(&mut gates, &mut c_state, &mut tc, h_t, batch, hidden);
                h_prev.copy_from_slice(h_t);
            }
        }
    }
}

/// Backpropagation through time for one LSTM layer.
///
/// `d_h_seq` is the upstream gradient of the layer output. Gradients are
/// accumulated into `dw_ih`, `dw_hh`, `db`, and `dx_seq` when requested.
/// The recurrent sweep only computes per-step gate gradients; the weight
/// and input gradients are then formed with whole-sequence matmuls.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    x_seq: &[f64],
    h_seq: &[f64],
    saved: &LstmSaved,
    w_ih: &[f64],
    w_hh: &[f64],
    d_h_seq: &[f64],
    steps: usize,
    batch: usize,
    input: usize,
    hidden: usize,
    mut dx_seq: Option<&mut [f64]>,
    dw_ih: &mut [f64],
    dw_hh: &mut [f64],
    db: &mut [f64],
) {
    let g4 = 4 * hidden;
    let bh = batch * hidden;
    let mut d_h = vec![0.0; bh];
    let mut d_c = vec![0.0; bh];
    let mut w_hh_t = vec![0.0; hidden * g4];
    transpose_into(w_hh, hidden, g4, &mut w_hh_t);
    let mut w_ih_t = vec![0.0; input * g4];
    transpose_into(w_ih, input, g4, &mut w_ih_t);

    // Reverse sweep in step blocks; each block's gate gradients stay
    // cache-hot for the weight and input contractions that follow it.
    const BLOCK: usize = 64;
    let mut d_gates_block = vec![0.0; BLOCK.min(steps) * batch * g4];
    let mut t1 = steps;
    while t1 > 0 {
        let t0 = t1.saturating_sub(BLOCK);
        let span = t1 - t0;
        for t in (t0..t1).rev() {
            let up = &d_h_seq[t * bh..][..bh];
            for (dh, &u) in d_h.iter_mut().zip(up.iter()) {
                *dh += u;
            }
            let gates = &saved.gates[t * batch * g4..][..batch * g4];
            let tanh_c = &saved.tanh_cells[t * bh..][..bh];
            let d_gates = &mut d_gates_block[(t - t0) * batch * g4..][..batch * g4];
            for b in 0..batch {
                let g_row = &gates[b * g4..][..g4];
                let dg_row = &mut d_gates[b * g4..][..g4];
                for j in 0..hidden {
                    let idx = b * hidden + j;
                    let i_g = g_row[j];
                    let f_g = g_row[hidden + j];
                    let g_g = g_row[2 * hidden + j];
                    let o_g = g_row[3 * hidden + j];
                    let tc = tanh_c[idx];
                    let c_prev = if t > 0 { saved.cells[(t - 1) * bh + idx] } else { 0.0 };

                    let dh = d_h[idx];
                    let d_o = dh * tc;
                    let dc = d_c[idx] + dh * o_g * (1.0 - tc * tc);
                    let d_i = dc * g_g;
                    let d_f = dc * c_prev;
                    let d_g = dc * i_g;
                    d_c[idx] = dc * f_g;

                    dg_row[j] = d_i * i_g * (1.0 - i_g);
                    dg_row[hidden + j] = d_f * f_g * (1.0 - f_g);
                    dg_row[2 * hidden + j] = d_g * (1.0 - g_g * g_g);
                    dg_row[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
                }
            }
            if t > 0 {
                // d_h for step t-1 through the recurrent weights.
                mm(d_gates, &w_hh_t, batch, g4, hidden, &mut d_h);
            }
        }

        // Contractions over this block.
        let dg = &d_gates_block[..span * batch * g4];
        let x_block = &x_seq[t0 * batch * input..][..span * batch * input];
        mm_at_acc(x_block, dg, span * batch, input, g4, dw_ih);
        colsum_acc(dg, span * batch, db);
        if let Some(dx) = dx_seq.as_deref_mut() {
            let dx_block = &mut dx[t0 * batch * input..][..span * batch * input];
            mm_acc(dg, &w_ih_t, span * batch, g4, input, dx_block);
        }
        // dW_hh = sum_t h_{t-1}^T d_gates_t; h_{-1} = 0 drops the t=0 term.
        if t1 > 1 {
            let h_from = t0.max(1) - 1;
            let h_block = &h_seq[h_from * bh..][..(t1 - 1 - h_from) * bh];
            let dg_from = (t0.max(1) - t0) * batch * g4;
            let dg_tail = &dg[dg_from..];
            mm_at_acc(h_block, dg_tail, (t1 - 1 - h_from) * batch, hidden, g4, dw_hh);
        }
        t1 = t0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive triple-loop reference for the matmul kernels.
    fn mm_naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn mm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let mut out = vec![0.0; 8];
        mm(&a, &b, 2, 3, 4, &mut out);
        let want = mm_naive(&a, &b, 2, 3, 4);
        for (x, y) in out.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mm_matches_naive_larger() {
        // Sizes exercising both the unrolled body and the remainder loop.
        let (m, k, n) = (5, 7, 9);
        let a: Vec<f64> = (0..m * k).map(|v| ((v * 37 % 11) as f64 - 5.0) * 0.17).collect();
        let b: Vec<f64> = (0..k * n).map(|v| ((v * 53 % 13) as f64 - 6.0) * 0.09).collect();
        let mut out = vec![0.0; m * n];
        mm(&a, &b, m, k, n, &mut out);
        let want = mm_naive(&a, &b, m, k, n);
        for (x, y) in out.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_variants_match_naive() {
        let a: Vec<f64> = (0..15).map(|v| (v as f64 * 0.7).cos()).collect();
        let b: Vec<f64> = (0..20).map(|v| (v as f64 * 0.11).sin()).collect();
        // a: [3,5], b stored as [4,5] for bt; out = a @ b^T : [3,4]
        let mut out = vec![0.0; 12];
        mm_bt_acc(&a, &b, 3, 5, 4, &mut out);
        let mut bt = vec![0.0; 20];
        for i in 0..4 {
            for j in 0..5 {
                bt[j * 4 + i] = b[i * 5 + j];
            }
        }
        let want = mm_naive(&a, &bt, 3, 5, 4);
        for (x, y) in out.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        // a stored [5,3] for at; out = a^T @ b' where b': [5,4]
        let mut out2 = vec![0.0; 12];
        mm_at_acc(&a, &b, 5, 3, 4, &mut out2);
        let mut at = vec![0.0; 15];
        for i in 0..5 {
            for j in 0..3 {
                at[j * 5 + i] = a[i * 3 + j];
            }
        }
        let want2 = mm_naive(&at, &b, 3, 5, 4);
        for (x, y) in out2.iter().zip(want2.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-10);
        let x = 1.37;
        assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let x = [1.0, 2.0, 3.0];
        let w = [1.0];
        let mut out = vec![0.0; 3];
        conv1d_forward(&x, &w, 1, 1, 3, 1, 1, 1, 0, &mut out);
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_strided_matches_direct_sum() {
        // x length 7, kernel 3, stride 2, padding 1 -> out length 4.
        let x = [1.0, -2.0, 3.0, 0.5, 2.0, -1.0, 4.0];
        let w = [0.5, -1.0, 2.0];
        let mut out = vec![0.0; 4];
        conv1d_forward(&x, &w, 1, 1, 7, 1, 3, 2, 1, &mut out);
        let xp = |i: isize| -> f64 {
            if i < 0 || i >= 7 {
                0.0
            } else {
                x[i as usize]
            }
        };
        for l in 0..4 {
            let want: f64 = (0..3)
                .map(|k| w[k] * xp((l * 2 + k) as isize - 1))
                .sum();
            assert!((out[l] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_window_two() {
        let x = [1.0, 3.0, 2.0, 5.0];
        let mut out = vec![0.0; 2];
        let mut arg = vec![0usize; 2];
        maxpool1d_forward(&x, 1, 4, 2, &mut out, &mut arg);
        assert_eq!(out, vec![3.0, 5.0]);
        assert_eq!(arg, vec![1, 3]);
    }

    /// Hand-evaluated single LSTM cell with scalar weights, checked gate by
    /// gate against the kernel.
    #[test]
    fn lstm_single_step_matches_hand_arithmetic() {
        let (steps, batch, input, hidden) = (1, 1, 1, 1);
        let x = [0.7];
        // w_ih = [wi, wf, wg, wo] for input dim 1, hidden 1.
        let w_ih = [0.3, -0.2, 0.5, 0.1];
        let w_hh = [0.0, 0.0, 0.0, 0.0]; // h starts at zero anyway
        let bias = [0.05, 0.1, -0.05, 0.2];
        let mut h = vec![0.0; 1];
        let mut saved = LstmSaved::zeros(1, 1, 1);
        lstm_forward(
            &x, &w_ih, &w_hh, &bias, steps, batch, input, hidden, &mut h,
            Some(&mut saved),
        );
        let i_g = sigmoid(0.3 * 0.7 + 0.05);
        let f_g = sigmoid(-0.2 * 0.7 + 0.1);
        let g_g = (0.5 * 0.7 - 0.05f64).tanh();
        let o_g = sigmoid(0.1 * 0.7 + 0.2);
        let c = i_g * g_g; // f * c_prev = 0
        let want_h = o_g * c.tanh();
        assert!((saved.gates[0] - i_g).abs() < 1e-15);
        assert!((saved.gates[1] - f_g).abs() < 1e-15);
        assert!((saved.gates[2] - g_g).abs() < 1e-15);
        assert!((saved.gates[3] - o_g).abs() < 1e-15);
        assert!((saved.cells[0] - c).abs() < 1e-15);
        assert!((h[0] - want_h).abs() < 1e-15);
    }

    /// Two-step recurrence: the second step must see h1 and c1.
    #[test]
    fn lstm_two_steps_carry_state() {
        let (steps, batch, input, hidden) = (2, 1, 1, 1);
        let x = [0.4, -0.3];
        let w_ih = [0.6, 0.2, -0.4, 0.3];
        let w_hh = [0.1, -0.2, 0.5, 0.05];
        let bias = [0.0, 1.0, 0.0, 0.0];
        let mut h = vec![0.0; 2];
        lstm_forward(&x, &w_ih, &w_hh, &bias, steps, batch, input, hidden, &mut h, None);

        // Manual rollout.
        let cell = |x: f64, h: f64, c: f64| -> (f64, f64) {
            let i_g = sigmoid(0.6 * x + 0.1 * h);
            let f_g = sigmoid(0.2 * x - 0.2 * h + 1.0);
            let g_g = (-0.4 * x + 0.5 * h).tanh();
            let o_g = sigmoid(0.3 * x + 0.05 * h);
            let c2 = f_g * c + i_g * g_g;
            (o_g * c2.tanh(), c2)
        };
        let (h1, c1) = cell(0.4, 0.0, 0.0);
        let (h2, _) = cell(-0.3, h1, c1);
        assert!((h[0] - h1).abs() < 1e-15);
        assert!((h[1] - h2).abs() < 1e-15);
    }
}
