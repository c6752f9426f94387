//! The four networks: two LSTM generators (PPG→ABP and ABP→PPG) and two
//! CNN discriminators, with initialization, inference forwards, and
//! graph builders for training.
//!
//! Generators: two stacked LSTM layers of 50 hidden units over a
//! 1000-sample sequence of scalar steps, a shared 50→1 projection per step,
//! and a sigmoid keeping outputs in (0,1).
//!
//! Discriminators: four 1-D conv blocks (channels 1→16→32→64→128, kernel 5,
//! stride 1, padding 2), each followed by ReLU and a width-2 max pool
//! (1000→500→250→125→62), then a dense layer and a sigmoid score.

pub mod checkpoint;

use crate::diffcore::{kernels, Activation, AdamState, Graph, NdArray, NodeId};
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sequence length every network consumes and produces.
pub const SEGMENT_LEN: usize = 1000;
/// LSTM hidden width per layer.
pub const HIDDEN: usize = 50;
/// Discriminator channel progression.
pub const DISC_CHANNELS: [usize; 5] = [1, 16, 32, 64, 128];
pub const DISC_KERNEL: usize = 5;
pub const DISC_PADDING: usize = 2;
pub const DISC_POOL: usize = 2;
/// Flattened width entering the discriminator's dense layer:
/// 1000 pooled to 500/250/125/62, times 128 channels.
pub const DISC_DENSE_IN: usize = 128 * 62;

/// One LSTM layer's parameters. Weight layout follows the kernel contract:
/// `w_ih: [input, 4*hidden]`, `w_hh: [hidden, 4*hidden]`, `bias: [4*hidden]`
/// with gate order i,f,g,o.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_ih: NdArray,
    pub w_hh: NdArray,
    pub bias: NdArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    pub proj_w: NdArray,
    pub proj_b: NdArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    pub kernel: NdArray,
    pub bias: NdArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub blocks: Vec<ConvBlockParams>,
    pub dense_w: NdArray,
    pub dense_b: NdArray,
}

/// Parameters and optimizer state for all four networks. The four sets are
/// structurally independent; nothing is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub g_pa: GeneratorParams,
    pub g_ap: GeneratorParams,
    pub d_a: DiscriminatorParams,
    pub d_p: DiscriminatorParams,
    pub opt_g_pa: AdamState,
    pub opt_g_ap: AdamState,
    pub opt_d_a: AdamState,
    pub opt_d_p: AdamState,
}

fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> NdArray {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    NdArray::new(shape, data).unwrap()
}

fn init_lstm_layer(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmLayerParams {
    let g4 = 4 * hidden;
    let w_ih = glorot(vec![input, g4], input, hidden, rng);
    let w_hh = glorot(vec![hidden, g4], hidden, hidden, rng);
    // Zero biases except the forget gate, which starts open at +1.
    let mut bias = NdArray::zeros(vec![g4]);
    bias.data_mut()[hidden..2 * hidden].fill(1.0);
    LstmLayerParams { w_ih, w_hh, bias }
}

fn init_generator(rng: &mut ChaCha8Rng) -> GeneratorParams {
    GeneratorParams {
        layer1: init_lstm_layer(1, HIDDEN, rng),
        layer2: init_lstm_layer(HIDDEN, HIDDEN, rng),
        proj_w: glorot(vec![HIDDEN, 1], HIDDEN, 1, rng),
        proj_b: NdArray::zeros(vec![1]),
    }
}

fn init_discriminator(rng: &mut ChaCha8Rng) -> DiscriminatorParams {
    let mut blocks = Vec::new();
    for w in DISC_CHANNELS.windows(2) {
        let (c_in, c_out) = (w[0], w[1]);
        blocks.push(ConvBlockParams {
            kernel: glorot(
                vec![c_out, c_in, DISC_KERNEL],
                c_in * DISC_KERNEL,
                c_out * DISC_KERNEL,
                rng,
            ),
            bias: NdArray::zeros(vec![c_out]),
        });
    }
    DiscriminatorParams {
        blocks,
        dense_w: glorot(vec![DISC_DENSE_IN, 1], DISC_DENSE_IN, 1, rng),
        dense_b: NdArray::zeros(vec![1]),
    }
}

/// Deterministic Glorot-uniform initialization of all four networks with
/// fresh optimizer state.
pub fn init_bundle(seed: u64) -> ModelBundle {
    let mut r = rng::stream(seed, "init-g-pa", 0);
    let g_pa = init_generator(&mut r);
    let mut r = rng::stream(seed, "init-g-ap", 0);
    let g_ap = init_generator(&mut r);
    let mut r = rng::stream(seed, "init-d-a", 0);
    let d_a = init_discriminator(&mut r);
    let mut r = rng::stream(seed, "init-d-p", 0);
    let d_p = init_discriminator(&mut r);
    let opt_g_pa = AdamState::new(&generator_param_vec(&g_pa));
    let opt_g_ap = AdamState::new(&generator_param_vec(&g_ap));
    let opt_d_a = AdamState::new(&discriminator_param_vec(&d_a));
    let opt_d_p = AdamState::new(&discriminator_param_vec(&d_p));
    ModelBundle {
        g_pa,
        g_ap,
        d_a,
        d_p,
        opt_g_pa,
        opt_g_ap,
        opt_d_a,
        opt_d_p,
    }
}

// ── Canonical parameter enumeration ──────────────────────────────────
//
// Checkpointing, aggregation, and the optimizer all walk parameters in this
// fixed order, so every consumer sees the same layout.

fn generator_param_vec(g: &GeneratorParams) -> Vec<NdArray> {
    g.params().into_iter().cloned().collect()
}

fn discriminator_param_vec(d: &DiscriminatorParams) -> Vec<NdArray> {
    d.params().into_iter().cloned().collect()
}

pub const GENERATOR_PARAM_NAMES: [&str; 8] = [
    "lstm1.w_ih",
    "lstm1.w_hh",
    "lstm1.bias",
    "lstm2.w_ih",
    "lstm2.w_hh",
    "lstm2.bias",
    "proj.weight",
    "proj.bias",
];

impl GeneratorParams {
    pub fn params(&self) -> Vec<&NdArray> {
        vec![
            &self.layer1.w_ih,
            &self.layer1.w_hh,
            &self.layer1.bias,
            &self.layer2.w_ih,
            &self.layer2.w_hh,
            &self.layer2.bias,
            &self.proj_w,
            &self.proj_b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut NdArray> {
        vec![
            &mut self.layer1.w_ih,
            &mut self.layer1.w_hh,
            &mut self.layer1.bias,
            &mut self.layer2.w_ih,
            &mut self.layer2.w_hh,
            &mut self.layer2.bias,
            &mut self.proj_w,
            &mut self.proj_b,
        ]
    }
}

impl DiscriminatorParams {
    pub fn params(&self) -> Vec<&NdArray> {
        let mut v: Vec<&NdArray> = Vec::new();
        for b in &self.blocks {
            v.push(&b.kernel);
            v.push(&b.bias);
        }
        v.push(&self.dense_w);
        v.push(&self.dense_b);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut NdArray> {
        let mut v: Vec<&mut NdArray> = Vec::new();
        for b in &mut self.blocks {
            v.push(&mut b.kernel);
            v.push(&mut b.bias);
        }
        v.push(&mut self.dense_w);
        v.push(&mut self.dense_b);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.blocks.len() {
            v.push(format!("conv{}.kernel", i + 1));
            v.push(format!("conv{}.bias", i + 1));
        }
        v.push("dense.weight".into());
        v.push("dense.bias".into());
        v
    }
}

impl ModelBundle {
    /// All parameters with hierarchical names, in canonical order.
    pub fn named_params(&self) -> Vec<(String, &NdArray)> {
        let mut out = Vec::new();
        for (prefix, g) in [("g_pa", &self.g_pa), ("g_ap", &self.g_ap)] {
            for (name, p) in GENERATOR_PARAM_NAMES.iter().zip(g.params()) {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        for (prefix, d) in [("d_a", &self.d_a), ("d_p", &self.d_p)] {
            for (name, p) in d.param_names().into_iter().zip(d.params()) {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut NdArray)> {
        let mut out = Vec::new();
        for (prefix, g) in [("g_pa", &mut self.g_pa), ("g_ap", &mut self.g_ap)] {
            for (name, p) in GENERATOR_PARAM_NAMES.iter().zip(g.params_mut()) {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        for (prefix, d) in [("d_a", &mut self.d_a), ("d_p", &mut self.d_p)] {
            let names = d.param_names();
            for (name, p) in names.into_iter().zip(d.params_mut()) {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        out
    }

    /// Fresh zeroed optimizer state for all four networks.
    pub fn reset_optimizer(&mut self) {
        self.opt_g_pa = AdamState::new(&generator_param_vec(&self.g_pa));
        self.opt_g_ap = AdamState::new(&generator_param_vec(&self.g_ap));
        self.opt_d_a = AdamState::new(&discriminator_param_vec(&self.d_a));
        self.opt_d_p = AdamState::new(&discriminator_param_vec(&self.d_p));
    }
}

// ── Inference forwards ───────────────────────────────────────────────

fn check_segment_len(len: usize, op: &'static str) -> Result<()> {
    if len != SEGMENT_LEN {
        return Err(Error::invalid(
            op,
            format!("input length {len}, expected {SEGMENT_LEN}"),
        ));
    }
    Ok(())
}

/// Batched generator inference: `inputs` is B rows of 1000 samples
/// (row-major [B, 1000]), output has the same layout. Values flow through
/// the two LSTM layers as a length-1000 sequence of scalar steps, then the
/// per-step projection and sigmoid.
pub fn generator_forward_batch(
    params: &GeneratorParams,
    inputs: &[f64],
    batch: usize,
) -> Result<Vec<f64>> {
    if batch == 0 || inputs.len() != batch * SEGMENT_LEN {
        return Err(Error::invalid(
            "generator_forward",
            format!("expected batch*{SEGMENT_LEN} samples, got {}", inputs.len()),
        ));
    }
    let t = SEGMENT_LEN;
    // [B, T] -> time-major [T, B, 1].
    let mut x = vec![0.0; t * batch];
    for b in 0..batch {
        let row = &inputs[b * t..][..t];
        for s in 0..t {
            x[s * batch + b] = row[s];
        }
    }
    let mut h1 = vec![0.0; t * batch * HIDDEN];
    kernels::lstm_forward(
        &x,
        params.layer1.w_ih.data(),
        params.layer1.w_hh.data(),
        params.layer1.bias.data(),
        t,
        batch,
        1,
        HIDDEN,
        &mut h1,
        None,
    );
    let mut h2 = vec![0.0; t * batch * HIDDEN];
    kernels::lstm_forward(
        &h1,
        params.layer2.w_ih.data(),
        params.layer2.w_hh.data(),
        params.layer2.bias.data(),
        t,
        batch,
        HIDDEN,
        HIDDEN,
        &mut h2,
        None,
    );
    drop(h1);
    // Per-step projection to a scalar, plus bias and sigmoid.
    let mut z = vec![0.0; t * batch];
    kernels::mm(&h2, params.proj_w.data(), t * batch, HIDDEN, 1, &mut z);
    let b0 = params.proj_b.data()[0];
    let mut out = vec![0.0; batch * t];
    for s in 0..t {
        for b in 0..batch {
            out[b * t + s] = crate::diffcore::vmath::fast_sigmoid(z[s * batch + b] + b0);
        }
    }
    Ok(out)
}

/// Single-segment generator inference. Input is one 1000-sample segment in
/// [0,1]; output is 1000 samples in (0,1).
pub fn generator_forward(params: &GeneratorParams, input: &[f64]) -> Result<Vec<f64>> {
    check_segment_len(input.len(), "generator_forward")?;
    generator_forward_batch(params, input, 1)
}

/// Batched discriminator inference; returns one score in (0,1) per row.
pub fn discriminator_forward_batch(
    params: &DiscriminatorParams,
    inputs: &[f64],
    batch: usize,
) -> Result<Vec<f64>> {
    if batch == 0 || inputs.len() != batch * SEGMENT_LEN {
        return Err(Error::invalid(
            "discriminator_forward",
            format!("expected batch*{SEGMENT_LEN} samples, got {}", inputs.len()),
        ));
    }
    let mut cur = inputs.to_vec();
    let mut len = SEGMENT_LEN;
    let mut c_in = 1;
    for block in &params.blocks {
        let c_out = block.kernel.shape()[0];
        let out_len = kernels::conv1d_out_len(len, DISC_KERNEL, 1, DISC_PADDING);
        let mut conv = vec![0.0; batch * c_out * out_len];
        kernels::conv1d_forward(
            &cur,
            block.kernel.data(),
            batch,
            c_in,
            len,
            c_out,
            DISC_KERNEL,
            1,
            DISC_PADDING,
            &mut conv,
        );
        let bias = block.bias.data();
        for b in 0..batch {
            for co in 0..c_out {
                let row = &mut conv[(b * c_out + co) * out_len..][..out_len];
                for v in row.iter_mut() {
                    *v = (*v + bias[co]).max(0.0);
                }
            }
        }
        let pooled_len = out_len / DISC_POOL;
        let mut pooled = vec![0.0; batch * c_out * pooled_len];
        let mut argmax = vec![0usize; batch * c_out * pooled_len];
        kernels::maxpool1d_forward(
            &conv,
            batch * c_out,
            out_len,
            DISC_POOL,
            &mut pooled,
            &mut argmax,
        );
        cur = pooled;
        len = pooled_len;
        c_in = c_out;
    }
    debug_assert_eq!(c_in * len, DISC_DENSE_IN);
    let mut scores = vec![0.0; batch];
    kernels::mm(&cur, params.dense_w.data(), batch, DISC_DENSE_IN, 1, &mut scores);
    let b0 = params.dense_b.data()[0];
    for s in scores.iter_mut() {
        *s = crate::diffcore::vmath::fast_sigmoid(*s + b0);
    }
    Ok(scores)
}

/// Single-segment discriminator inference.
pub fn discriminator_forward(params: &DiscriminatorParams, input: &[f64]) -> Result<f64> {
    check_segment_len(input.len(), "discriminator_forward")?;
    Ok(discriminator_forward_batch(params, input, 1)?[0])
}

// ── Graph builders for training ──────────────────────────────────────

/// Node ids of one generator's parameters inside a graph, in canonical
/// parameter order.
pub struct GeneratorNodes {
    pub ids: Vec<NodeId>,
}

/// Node ids of one discriminator's parameters inside a graph.
pub struct DiscriminatorNodes {
    pub ids: Vec<NodeId>,
}

/// Registers generator parameters as graph leaves. `trainable` controls
/// whether gradients are collected for them.
pub fn register_generator(g: &mut Graph, p: &GeneratorParams, trainable: bool) -> GeneratorNodes {
    let mut add = |a: &NdArray| {
        if trainable {
            g.param(a.clone())
        } else {
            g.input(a.clone())
        }
    };
    let ids = vec![
        add(&p.layer1.w_ih),
        add(&p.layer1.w_hh),
        add(&p.layer1.bias),
        add(&p.layer2.w_ih),
        add(&p.layer2.w_hh),
        add(&p.layer2.bias),
        add(&p.proj_w),
        add(&p.proj_b),
    ];
    GeneratorNodes { ids }
}

pub fn register_discriminator(
    g: &mut Graph,
    p: &DiscriminatorParams,
    trainable: bool,
) -> DiscriminatorNodes {
    let mut add = |a: &NdArray| {
        if trainable {
            g.param(a.clone())
        } else {
            g.input(a.clone())
        }
    };
    let mut ids = Vec::new();
    for b in &p.blocks {
        ids.push(add(&b.kernel));
        ids.push(add(&b.bias));
    }
    ids.push(add(&p.dense_w));
    ids.push(add(&p.dense_b));
    DiscriminatorNodes { ids }
}

/// Builds the taped generator forward over a time-major input node
/// `x: [T, B, 1]`; returns the `[T, B]` output node.
pub fn build_generator(
    g: &mut Graph,
    nodes: &GeneratorNodes,
    x: NodeId,
    batch: usize,
) -> Result<NodeId> {
    let t = SEGMENT_LEN;
    let h1 = g.lstm_layer(x, nodes.ids[0], nodes.ids[1], nodes.ids[2])?;
    let h2 = g.lstm_layer(h1, nodes.ids[3], nodes.ids[4], nodes.ids[5])?;
    let flat = g.reshape(h2, vec![t * batch, HIDDEN])?;
    let z = g.matmul(flat, nodes.ids[6])?;
    let zb = g.add_bias(z, nodes.ids[7])?;
    let y = g.activation(zb, Activation::Sigmoid);
    g.reshape(y, vec![t, batch])
}

/// Builds the taped discriminator forward over `x: [B, 1, 1000]`; returns
/// the `[B, 1]` score node.
pub fn build_discriminator(
    g: &mut Graph,
    nodes: &DiscriminatorNodes,
    x: NodeId,
    batch: usize,
) -> Result<NodeId> {
    let mut cur = x;
    for (i, _) in DISC_CHANNELS.windows(2).enumerate() {
        let conv = g.conv1d(cur, nodes.ids[2 * i], 1, DISC_PADDING)?;
        let biased = g.add_chan_bias(conv, nodes.ids[2 * i + 1])?;
        let act = g.activation(biased, Activation::Relu);
        cur = g.maxpool1d(act, DISC_POOL)?;
    }
    let flat = g.reshape(cur, vec![batch, DISC_DENSE_IN])?;
    let z = g.matmul(flat, nodes.ids[nodes.ids.len() - 2])?;
    let zb = g.add_bias(z, nodes.ids[nodes.ids.len() - 1])?;
    Ok(g.activation(zb, Activation::Sigmoid))
}

/// Packs B segments (each a 1000-sample row) into a time-major
/// `[T, B, 1]` array.
pub fn time_major(segments: &[&[f64]]) -> NdArray {
    let batch = segments.len();
    let t = SEGMENT_LEN;
    let mut x = vec![0.0; t * batch];
    for (b, seg) in segments.iter().enumerate() {
        debug_assert_eq!(seg.len(), t);
        for (s, &v) in seg.iter().enumerate() {
            x[s * batch + b] = v;
        }
    }
    NdArray::new(vec![t, batch, 1], x).unwrap()
}

/// Inverse of [`time_major`]: `[T, B]` data back to B rows of T samples.
pub fn batch_major(data: &[f64], batch: usize) -> Vec<Vec<f64>> {
    let t = SEGMENT_LEN;
    let mut out = vec![vec![0.0; t]; batch];
    for s in 0..t {
        for b in 0..batch {
            out[b][s] = data[s * batch + b];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_bundle(11);
        let b = init_bundle(11);
        let c = init_bundle(12);
        assert_eq!(a, b);
        assert_ne!(
            a.g_pa.layer1.w_ih.data(),
            c.g_pa.layer1.w_ih.data(),
            "different seeds must differ"
        );
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let b = init_bundle(3);
        // Recompute the bound for every weight matrix from its shape.
        let checks: Vec<(&NdArray, usize, usize)> = vec![
            (&b.g_pa.layer1.w_ih, 1, HIDDEN),
            (&b.g_pa.layer1.w_hh, HIDDEN, HIDDEN),
            (&b.g_pa.layer2.w_ih, HIDDEN, HIDDEN),
            (&b.g_pa.proj_w, HIDDEN, 1),
            (&b.d_a.blocks[0].kernel, DISC_KERNEL, 16 * DISC_KERNEL),
            (&b.d_a.dense_w, DISC_DENSE_IN, 1),
        ];
        for (arr, fan_in, fan_out) in checks {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for &v in arr.data() {
                assert!(v.abs() <= bound, "weight {v} outside ±{bound}");
            }
        }
        // Forget-gate bias starts at one, everything else at zero.
        let bias = b.g_pa.layer1.bias.data();
        assert!(bias[..HIDDEN].iter().all(|&v| v == 0.0));
        assert!(bias[HIDDEN..2 * HIDDEN].iter().all(|&v| v == 1.0));
        assert!(bias[2 * HIDDEN..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameter_generator_outputs_half() {
        let mut p = init_bundle(1).g_pa;
        for arr in p.params_mut() {
            arr.data_mut().fill(0.0);
        }
        let input: Vec<f64> = (0..SEGMENT_LEN).map(|i| i as f64 / 999.0).collect();
        let out = generator_forward(&p, &input).unwrap();
        assert_eq!(out.len(), SEGMENT_LEN);
        for &v in &out {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn generator_output_length_and_range() {
        let p = init_bundle(5).g_pa;
        let input: Vec<f64> = (0..SEGMENT_LEN)
            .map(|i| ((i as f64) * 0.01).sin().abs())
            .collect();
        let out = generator_forward(&p, &input).unwrap();
        assert_eq!(out.len(), SEGMENT_LEN);
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
        // Wrong length is rejected.
        assert!(generator_forward(&p, &input[..999]).is_err());
    }

    #[test]
    fn zero_parameter_discriminator_scores_half() {
        let mut p = init_bundle(1).d_a;
        for arr in p.params_mut() {
            arr.data_mut().fill(0.0);
        }
        let input = vec![0.3; SEGMENT_LEN];
        assert_eq!(discriminator_forward(&p, &input).unwrap(), 0.5);
    }

    #[test]
    fn discriminator_score_in_open_interval() {
        let p = init_bundle(9).d_p;
        let input: Vec<f64> = (0..SEGMENT_LEN)
            .map(|i| ((i * 7 % 13) as f64) / 13.0)
            .collect();
        let s = discriminator_forward(&p, &input).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!(discriminator_forward(&p, &input[..10]).is_err());
    }

    /// Pool arithmetic: 1000 → 500 → 250 → 125 → 62.
    #[test]
    fn discriminator_layer_lengths() {
        let mut len = SEGMENT_LEN;
        let mut lens = Vec::new();
        for _ in 0..4 {
            len = kernels::conv1d_out_len(len, DISC_KERNEL, 1, DISC_PADDING) / DISC_POOL;
            lens.push(len);
        }
        assert_eq!(lens, vec![500, 250, 125, 62]);
        assert_eq!(DISC_DENSE_IN, 128 * 62);
    }

    /// Cycle shape closure: translations compose and stay length-1000.
    #[test]
    fn cycle_composition_is_defined() {
        let b = init_bundle(21);
        let x: Vec<f64> = (0..SEGMENT_LEN)
            .map(|i| 0.5 + 0.3 * ((i as f64) * 0.02).sin())
            .collect();
        let abp = generator_forward(&b.g_pa, &x).unwrap();
        let back = generator_forward(&b.g_ap, &abp).unwrap();
        assert_eq!(back.len(), SEGMENT_LEN);
        assert!(back.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    /// Taped forward must agree with the inference path.
    #[test]
    fn taped_and_inference_forwards_agree() {
        let b = init_bundle(33);
        let batch = 3;
        let segs: Vec<Vec<f64>> = (0..batch)
            .map(|k| {
                (0..SEGMENT_LEN)
                    .map(|i| 0.5 + 0.4 * ((i as f64) * 0.013 + k as f64).sin())
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = segs.iter().map(|s| s.as_slice()).collect();
        let mut flat = Vec::new();
        for s in &segs {
            flat.extend_from_slice(s);
        }
        let infer = generator_forward_batch(&b.g_pa, &flat, batch).unwrap();

        let mut g = Graph::new();
        let nodes = register_generator(&mut g, &b.g_pa, true);
        let x = g.input(time_major(&refs));
        let y = build_generator(&mut g, &nodes, x, batch).unwrap();
        let taped = batch_major(g.value(y).data(), batch);
        for bi in 0..batch {
            for s in 0..SEGMENT_LEN {
                let a = infer[bi * SEGMENT_LEN + s];
                let t = taped[bi][s];
                assert!((a - t).abs() < 1e-12, "mismatch at ({bi},{s}): {a} vs {t}");
            }
        }
    }

    #[test]
    fn taped_discriminator_matches_inference() {
        let b = init_bundle(40);
        let batch = 2;
        let segs: Vec<Vec<f64>> = (0..batch)
            .map(|k| {
                (0..SEGMENT_LEN)
                    .map(|i| ((i + k * 17) as f64 * 0.011).cos().abs())
                    .collect()
            })
            .collect();
        let mut flat = Vec::new();
        for s in &segs {
            flat.extend_from_slice(s);
        }
        let infer = discriminator_forward_batch(&b.d_a, &flat, batch).unwrap();
        let mut g = Graph::new();
        let nodes = register_discriminator(&mut g, &b.d_a, true);
        let x = g.input(NdArray::new(vec![batch, 1, SEGMENT_LEN], flat).unwrap());
        let s = build_discriminator(&mut g, &nodes, x, batch).unwrap();
        for (bi, &v) in g.value(s).data().iter().enumerate() {
            assert!((v - infer[bi]).abs() < 1e-12);
        }
    }
}
