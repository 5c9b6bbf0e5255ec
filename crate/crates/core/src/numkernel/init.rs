use rand::Rng;

use super::tensor::{Real, Tensor};

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_fan_in<T: Real, R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::new(shape, values).expect("positive extents")
}
