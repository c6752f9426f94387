//! Adversarial training: the combined translation objective and the
//! per-batch update procedure for one client (or the centralized baseline).
//!
//! The generator objective is the sum of two least-squares adversarial
//! terms, a cycle-reconstruction term weighted by `lambda_cycle`, and an
//! identity term weighted by `lambda_identity`. Discriminators train on the
//! usual real→1 / generated→0 targets with generated inputs treated as
//! constants. Within a batch, discriminators update before generators.

use crate::diffcore::{adam_step, AdamHyper, Gradients, Graph, NdArray, NodeId};
use crate::error::{Error, Result};
use crate::nets::{self, time_major, GeneratorNodes, ModelBundle, SEGMENT_LEN};
use crate::signal::SegmentPair;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Relative weights of the cycle and identity objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    pub lambda_identity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cycle: 10.0,
            lambda_identity: 5.0,
        }
    }
}

/// Everything one training step needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainHyper {
    pub adam: AdamHyper,
    pub weights: LossWeights,
}

/// Per-step (or per-epoch mean) loss telemetry.
///
/// `total_g` always equals `adv_pa + adv_ap + lambda_c·cycle +
/// lambda_i·identity` exactly: it is recomputed from the stored fields
/// rather than averaged independently.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub adv_pa: f64,
    pub adv_ap: f64,
    pub cycle: f64,
    pub identity: f64,
    pub total_g: f64,
    pub d_a_loss: f64,
    pub d_p_loss: f64,
}

impl LossBreakdown {
    pub fn recompute_total(&mut self, weights: &LossWeights) {
        self.total_g = self.adv_pa
            + self.adv_ap
            + weights.lambda_cycle * self.cycle
            + weights.lambda_identity * self.identity;
    }
}

// ── Loss functions ───────────────────────────────────────────────────

/// Least-squares adversarial loss: mean of (score − target)² over a batch
/// of scores.
pub fn adversarial_loss(scores: &[f64], target: f64) -> f64 {
    let n = scores.len().max(1) as f64;
    scores.iter().map(|&s| (s - target) * (s - target)).sum::<f64>() / n
}

/// One direction of the cycle term: mean absolute error between a segment
/// and its round-trip reconstruction. The training objective sums both
/// directions.
pub fn cycle_loss(x: &[f64], x_cyc: &[f64]) -> Result<f64> {
    if x.len() != x_cyc.len() {
        return Err(Error::ShapeMismatch {
            op: "cycle_loss",
            lhs: vec![x.len()],
            rhs: vec![x_cyc.len()],
        });
    }
    let n = x.len() as f64;
    Ok(x.iter()
        .zip(x_cyc)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// One direction of the identity term: mean absolute error between a real
/// segment and the output of the generator whose target domain it already
/// belongs to. Both directions are summed in the objective.
pub fn identity_loss(x: &[f64], g_same: &[f64]) -> Result<f64> {
    cycle_loss(x, g_same).map_err(|e| match e {
        Error::ShapeMismatch { lhs, rhs, .. } => Error::ShapeMismatch {
            op: "identity_loss",
            lhs,
            rhs,
        },
        other => other,
    })
}

// ── Steps ────────────────────────────────────────────────────────────

fn finite_or(term: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { term, value })
    }
}

/// Collects gradients for a parameter node list in canonical order.
fn take_grads(grads: &mut Gradients, ids: &[NodeId]) -> Vec<Option<NdArray>> {
    ids.iter().map(|&id| grads.take(id)).collect()
}

fn prefix_param_err(e: Error, net: &str) -> Error {
    match e {
        Error::NonFiniteGradient { param } => Error::NonFiniteGradient {
            param: format!("{net}.{param}"),
        },
        other => other,
    }
}

/// Wires a `[T,B]` sequence node into a discriminator as `[B,1,T]`.
fn as_disc_input(g: &mut Graph, seq_tb: NodeId, batch: usize) -> Result<NodeId> {
    let bt = g.transpose(seq_tb)?;
    g.reshape(bt, vec![batch, 1, SEGMENT_LEN])
}

/// One generator update on a batch of aligned (PPG, ABP) segments.
///
/// Builds a single graph holding both translation directions, the cycle
/// reconstructions, and the identity passes, scores the generated segments
/// with frozen discriminators targeted at 1, and applies one Adam step to
/// each generator. Discriminator parameters are untouched.
pub fn generator_step(
    bundle: &mut ModelBundle,
    ppg: &[&[f64]],
    abp: &[&[f64]],
    hyper: &TrainHyper,
) -> Result<LossBreakdown> {
    let batch = ppg.len();
    if batch == 0 || abp.len() != batch {
        return Err(Error::invalid(
            "generator_step",
            format!("batch sizes {} and {}", ppg.len(), abp.len()),
        ));
    }
    let w = &hyper.weights;
    let mut g = Graph::new();
    let gpa = register_trainable_generator(&mut g, bundle, true);
    let gap = register_trainable_generator(&mut g, bundle, false);
    let d_a = nets::register_discriminator(&mut g, &bundle.d_a, false);
    let d_p = nets::register_discriminator(&mut g, &bundle.d_p, false);

    let x_ppg = g.input(time_major(ppg));
    let x_abp = g.input(time_major(abp));
    let ppg_tb = g.reshape(x_ppg, vec![SEGMENT_LEN, batch])?;
    let abp_tb = g.reshape(x_abp, vec![SEGMENT_LEN, batch])?;

    // Translations.
    let fake_abp = nets::build_generator(&mut g, &gpa, x_ppg, batch)?;
    let fake_ppg = nets::build_generator(&mut g, &gap, x_abp, batch)?;

    // Adversarial terms against frozen discriminators, targets at 1.
    let fa_in = as_disc_input(&mut g, fake_abp, batch)?;
    let s_a = nets::build_discriminator(&mut g, &d_a, fa_in, batch)?;
    let ones = g.input(NdArray::full(vec![batch, 1], 1.0));
    let adv_pa = g.mse_loss(s_a, ones)?;

    let fp_in = as_disc_input(&mut g, fake_ppg, batch)?;
    let s_p = nets::build_discriminator(&mut g, &d_p, fp_in, batch)?;
    let ones2 = g.input(NdArray::full(vec![batch, 1], 1.0));
    let adv_ap = g.mse_loss(s_p, ones2)?;

    // Cycle reconstructions.
    let fa_seq = g.reshape(fake_abp, vec![SEGMENT_LEN, batch, 1])?;
    let cyc_p = nets::build_generator(&mut g, &gap, fa_seq, batch)?;
    let cyc_p_loss = g.l1_loss(cyc_p, ppg_tb)?;
    let fp_seq = g.reshape(fake_ppg, vec![SEGMENT_LEN, batch, 1])?;
    let cyc_a = nets::build_generator(&mut g, &gpa, fp_seq, batch)?;
    let cyc_a_loss = g.l1_loss(cyc_a, abp_tb)?;

    // Identity passes.
    let id_a = nets::build_generator(&mut g, &gpa, x_abp, batch)?;
    let id_a_loss = g.l1_loss(id_a, abp_tb)?;
    let id_p = nets::build_generator(&mut g, &gap, x_ppg, batch)?;
    let id_p_loss = g.l1_loss(id_p, ppg_tb)?;

    // total = adv_pa + adv_ap + λc·cycle + λi·identity, associated exactly
    // as the breakdown recomputation does.
    let cyc_sum = g.add(cyc_p_loss, cyc_a_loss)?;
    let id_sum = g.add(id_a_loss, id_p_loss)?;
    let cyc_scaled = g.scale(cyc_sum, w.lambda_cycle);
    let id_scaled = g.scale(id_sum, w.lambda_identity);
    let advs = g.add(adv_pa, adv_ap)?;
    let partial = g.add(advs, cyc_scaled)?;
    let total = g.add(partial, id_scaled)?;

    let mut breakdown = LossBreakdown {
        adv_pa: finite_or("adv_pa", g.value(adv_pa).item())?,
        adv_ap: finite_or("adv_ap", g.value(adv_ap).item())?,
        cycle: finite_or("cycle", g.value(cyc_sum).item())?,
        identity: finite_or("identity", g.value(id_sum).item())?,
        ..Default::default()
    };
    breakdown.recompute_total(w);
    debug_assert_eq!(breakdown.total_g, g.value(total).item());

    let mut grads = g.backward(total)?;
    let gpa_grads = take_grads(&mut grads, &gpa.ids);
    let gap_grads = take_grads(&mut grads, &gap.ids);
    drop(g);

    let mut p = bundle.g_pa.params_mut();
    adam_step(&mut p, &gpa_grads, &mut bundle.opt_g_pa, &hyper.adam)
        .map_err(|e| prefix_param_err(e, "g_pa"))?;
    let mut p = bundle.g_ap.params_mut();
    adam_step(&mut p, &gap_grads, &mut bundle.opt_g_ap, &hyper.adam)
        .map_err(|e| prefix_param_err(e, "g_ap"))?;
    Ok(breakdown)
}

fn register_trainable_generator(g: &mut Graph, bundle: &ModelBundle, pa: bool) -> GeneratorNodes {
    if pa {
        nets::register_generator(g, &bundle.g_pa, true)
    } else {
        nets::register_generator(g, &bundle.g_ap, true)
    }
}

/// One discriminator update on a batch. `D_A` trains on real ABP → 1 and
/// generated ABP → 0; `D_P` likewise on PPG. Generated inputs are produced
/// by inference and enter the graph as constants, so no gradient reaches
/// the generators; each discriminator takes one Adam step.
pub fn discriminator_step(
    bundle: &mut ModelBundle,
    ppg: &[&[f64]],
    abp: &[&[f64]],
    hyper: &TrainHyper,
) -> Result<LossBreakdown> {
    let batch = ppg.len();
    if batch == 0 || abp.len() != batch {
        return Err(Error::invalid(
            "discriminator_step",
            format!("batch sizes {} and {}", ppg.len(), abp.len()),
        ));
    }
    let flat = |rows: &[&[f64]]| -> Vec<f64> {
        let mut v = Vec::with_capacity(rows.len() * SEGMENT_LEN);
        for r in rows {
            v.extend_from_slice(r);
        }
        v
    };
    let ppg_flat = flat(ppg);
    let abp_flat = flat(abp);
    let fake_abp = nets::generator_forward_batch(&bundle.g_pa, &ppg_flat, batch)?;
    let fake_ppg = nets::generator_forward_batch(&bundle.g_ap, &abp_flat, batch)?;

    let d_a_loss = single_discriminator_step(
        &mut bundle.d_a,
        &mut bundle.opt_d_a,
        &abp_flat,
        &fake_abp,
        batch,
        hyper,
        "d_a",
    )?;
    let d_p_loss = single_discriminator_step(
        &mut bundle.d_p,
        &mut bundle.opt_d_p,
        &ppg_flat,
        &fake_ppg,
        batch,
        hyper,
        "d_p",
    )?;
    Ok(LossBreakdown {
        d_a_loss,
        d_p_loss,
        ..Default::default()
    })
}

fn single_discriminator_step(
    params: &mut crate::nets::DiscriminatorParams,
    opt: &mut crate::diffcore::AdamState,
    real_flat: &[f64],
    fake_flat: &[f64],
    batch: usize,
    hyper: &TrainHyper,
    net: &'static str,
) -> Result<f64> {
    let mut g = Graph::new();
    let nodes = nets::register_discriminator(&mut g, params, true);
    let x_real = g.input(NdArray::new(vec![batch, 1, SEGMENT_LEN], real_flat.to_vec())?);
    let x_fake = g.input(NdArray::new(vec![batch, 1, SEGMENT_LEN], fake_flat.to_vec())?);
    let s_real = nets::build_discriminator(&mut g, &nodes, x_real, batch)?;
    let s_fake = nets::build_discriminator(&mut g, &nodes, x_fake, batch)?;
    let ones = g.input(NdArray::full(vec![batch, 1], 1.0));
    let zeros = g.input(NdArray::zeros(vec![batch, 1]));
    let l_real = g.mse_loss(s_real, ones)?;
    let l_fake = g.mse_loss(s_fake, zeros)?;
    let sum = g.add(l_real, l_fake)?;
    let loss = g.scale(sum, 0.5);
    let value = finite_or(net, g.value(loss).item())?;
    let mut grads = g.backward(loss)?;
    let d_grads = take_grads(&mut grads, &nodes.ids);
    drop(g);
    let mut p = params.params_mut();
    adam_step(&mut p, &d_grads, opt, &hyper.adam).map_err(|e| prefix_param_err(e, net))?;
    Ok(value)
}

/// One pass over a shard: deterministic shuffle, then per batch a
/// discriminator step followed by a generator step. Returns the mean
/// breakdown (total recomputed from the mean terms, so the decomposition
/// identity holds on logged rows).
pub fn train_epoch(
    bundle: &mut ModelBundle,
    shard: &[SegmentPair],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    hyper: &TrainHyper,
) -> Result<LossBreakdown> {
    if shard.is_empty() {
        return Err(Error::invalid("train_epoch", "shard is empty"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("train_epoch", "batch_size must be ≥ 1"));
    }
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(rng);

    let mut sum = LossBreakdown::default();
    let mut batches = 0.0;
    for chunk in order.chunks(batch_size) {
        let ppg: Vec<&[f64]> = chunk.iter().map(|&i| shard[i].ppg.as_slice()).collect();
        let abp: Vec<&[f64]> = chunk.iter().map(|&i| shard[i].abp.as_slice()).collect();
        let d = discriminator_step(bundle, &ppg, &abp, hyper)?;
        let gen = generator_step(bundle, &ppg, &abp, hyper)?;
        sum.adv_pa += gen.adv_pa;
        sum.adv_ap += gen.adv_ap;
        sum.cycle += gen.cycle;
        sum.identity += gen.identity;
        sum.d_a_loss += d.d_a_loss;
        sum.d_p_loss += d.d_p_loss;
        batches += 1.0;
    }
    let mut mean = LossBreakdown {
        adv_pa: sum.adv_pa / batches,
        adv_ap: sum.adv_ap / batches,
        cycle: sum.cycle / batches,
        identity: sum.identity / batches,
        d_a_loss: sum.d_a_loss / batches,
        d_p_loss: sum.d_p_loss / batches,
        ..Default::default()
    };
    mean.recompute_total(&hyper.weights);
    Ok(mean)
}

/// Append-only comma-separated loss log, one row per epoch.
pub struct LossLog {
    file: std::fs::File,
}

impl LossLog {
    pub fn create(path: &Path) -> Result<Self> {
        let p = path.display().to_string();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(&p, e))?;
        writeln!(
            file,
            "epoch,adv_pa,adv_ap,cycle,identity,total_g,d_a_loss,d_p_loss"
        )
        .map_err(|e| Error::io(&p, e))?;
        Ok(LossLog { file })
    }

    pub fn append(&mut self, epoch: usize, b: &LossBreakdown) -> Result<()> {
        writeln!(
            self.file,
            "{},{},{},{},{},{},{},{}",
            epoch, b.adv_pa, b.adv_ap, b.cycle, b.identity, b.total_g, b.d_a_loss, b.d_p_loss
        )
        .map_err(|e| Error::io("loss log", e))
    }
}
