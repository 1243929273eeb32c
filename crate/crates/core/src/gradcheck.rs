//! Central-difference gradient checking for single layers.
//!
//! The scalar probed is `L = sum_k r_k * out_k` for a fixed pseudo-random
//! projection `r`, so every output element contributes. Dropout is checked in
//! train mode with a fixed seed, which freezes its mask.

use alloc::vec::Vec;
use rand::Rng as _;

use crate::layers::{layer_backward, layer_forward, LayerKind, Mode};
use crate::rng::rng_from;
use crate::tensor::{ShapeError, Tensor};

const DROPOUT_SEED: u64 = 0x5eed;

/// Relative error used by the checker: `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = (libm::fabs(analytic) + libm::fabs(numeric)).max(floor);
    libm::fabs(analytic - numeric) / denom
}

const REL_FLOOR: f64 = 1e-7;

fn projection(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn probe(
    kind: &LayerKind,
    weights: Option<&Tensor>,
    input: &Tensor,
    r: &[f64],
) -> Result<f64, ShapeError> {
    let (out, _) = layer_forward(kind, weights, input, Mode::Train, DROPOUT_SEED)?;
    Ok(out.data().iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Maximum relative error between analytic and central-difference gradients
/// over every input element and, for parameterized layers, every weight.
pub fn grad_check(
    kind: &LayerKind,
    weights: Option<&Tensor>,
    input: &Tensor,
    epsilon: f64,
) -> Result<f64, ShapeError> {
    let out_shape = kind.output_shape(input.shape())?;
    let r = projection(out_shape.iter().product(), 0xc0ffee);
    let upstream = Tensor::from_vec(&out_shape, r.clone())?;
    let (_, aux) = layer_forward(kind, weights, input, Mode::Train, DROPOUT_SEED)?;
    let (dx, dw) = layer_backward(kind, weights, input, &aux, &upstream)?;

    let mut worst: f64 = 0.0;
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + epsilon;
        let plus = probe(kind, weights, &x, &r)?;
        x.data_mut()[i] = orig - epsilon;
        let minus = probe(kind, weights, &x, &r)?;
        x.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(dx.data()[i], numeric, REL_FLOOR));
    }

    if let (Some(w), Some(dw)) = (weights, dw) {
        let mut w = w.clone();
        for i in 0..w.len() {
            let orig = w.data()[i];
            w.data_mut()[i] = orig + epsilon;
            let plus = probe(kind, Some(&w), input, &r)?;
            w.data_mut()[i] = orig - epsilon;
            let minus = probe(kind, Some(&w), input, &r)?;
            w.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(dw.data()[i], numeric, REL_FLOOR));
        }
    }
    Ok(worst)
}
