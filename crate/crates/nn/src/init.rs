//! Seeded parameter initialization.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trajmia_core::Scalar;

/// Uniform fan-in initialization: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
/// Draws happen in `f64` so `f32` and `f64` nets see the same stream.
pub fn uniform_fan_in<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<F> {
    assert!(fan_in > 0, "fan_in must be positive");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<F> = (0..n).map(|_| F::of_f64(rng.random_range(-bound..bound))).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape/data length")
}

pub fn zeros<F: Scalar>(shape: &[usize]) -> ArrayD<F> {
    ArrayD::zeros(IxDyn(shape))
}
