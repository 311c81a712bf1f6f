use rand::Rng;

use super::tensor::Tensor;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: impl Into<Vec<usize>>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}
