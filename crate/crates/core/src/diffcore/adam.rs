//! Adam optimizer over a list of parameter tensors.

use super::ndarray::NdArray;
use crate::error::{Error, Result};

/// Optimizer hyperparameters. Defaults follow common GAN practice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First- and second-moment accumulators mirroring a parameter list, plus
/// the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<NdArray>,
    v: Vec<NdArray>,
    step: u64,
}

impl AdamState {
    /// Fresh zeroed state shaped after the given parameters.
    pub fn new(params: &[NdArray]) -> Self {
        AdamState {
            m: params.iter().map(|p| NdArray::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| NdArray::zeros(p.shape().to_vec())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction over a parameter list.
///
/// `grads[i]` may be `None` for parameters that received no gradient this
/// step; their moments still decay. Non-finite gradients are rejected before
/// any state is touched, so a failed call leaves params and state unchanged.
pub fn adam_step(
    params: &mut [&mut NdArray],
    grads: &[Option<NdArray>],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.shape() != params[i].shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: params[i].shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: format!("#{i}"),
                });
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);

    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        match &grads[i] {
            Some(g) => {
                for ((pj, mj), (vj, &gj)) in p
                    .iter_mut()
                    .zip(m.iter_mut())
                    .zip(v.iter_mut().zip(g.data().iter()))
                {
                    *mj = hyper.beta1 * *mj + (1.0 - hyper.beta1) * gj;
                    *vj = hyper.beta2 * *vj + (1.0 - hyper.beta2) * gj * gj;
                    let m_hat = *mj / bc1;
                    let v_hat = *vj / bc2;
                    *pj -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
                }
            }
            None => {
                for ((pj, mj), vj) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mj *= hyper.beta1;
                    *vj *= hyper.beta2;
                    let m_hat = *mj / bc1;
                    let v_hat = *vj / bc2;
                    *pj -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
                }
            }
        }
    }
    Ok(())
}
