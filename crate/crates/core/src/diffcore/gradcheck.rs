//! Central finite-difference verification of analytic gradients.
//!
//! Kept in the library (rather than test code) because both the unit tests
//! and the acceptance suite drive it against every differentiable op and the
//! full networks. The finite-difference side only ever calls the forward
//! builder, so it stays independent of the backward implementation it checks.

use super::graph::{Graph, NodeId};
use super::ndarray::NdArray;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Outcome of one finite-difference comparison.
#[derive(Debug)]
pub struct GradCheckFailure {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Verifies analytic gradients of a scalar-valued builder against central
/// finite differences.
///
/// `build` receives a fresh graph plus leaf ids for every input tensor and
/// must return the scalar loss node. `coords[i]` selects which coordinates of
/// input `i` to probe (`None` probes all of them). Comparison is
/// `|a - n| <= tol * max(|a|, |n|, 1e-4)`.
pub fn check_gradients<F>(
    inputs: &[NdArray],
    coords: &[Option<Vec<usize>>],
    build: F,
) -> Result<(), GradCheckFailure>
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let eval = |tensors: &[NdArray]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.value(loss).item()
    };

    // Analytic gradients once.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &ids);
    let grads = g.backward(loss).expect("loss must be scalar");

    for (i, input) in inputs.iter().enumerate() {
        let probe: Vec<usize> = match &coords[i] {
            Some(c) => c.clone(),
            None => (0..input.len()).collect(),
        };
        let analytic = grads.get(ids[i]);
        for &c in &probe {
            let a = analytic.map(|g| g.data()[c]).unwrap_or(0.0);
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= FD_STEP;
            let n = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let denom = a.abs().max(n.abs()).max(1e-4);
            if (a - n).abs() > FD_REL_TOL * denom {
                return Err(GradCheckFailure {
                    input: i,
                    coord: c,
                    analytic: a,
                    numeric: n,
                });
            }
        }
    }
    Ok(())
}

/// Uniform random array in [-2, 2], the range the gradient-fidelity
/// property is specified over.
pub fn random_array(shape: Vec<usize>, rng: &mut impl rand::Rng) -> NdArray {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    NdArray::new(shape, data).unwrap()
}
