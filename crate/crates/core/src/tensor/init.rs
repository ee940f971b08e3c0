//! Parameter initializers.

use super::{Real, Rng, Tensor};

/// Uniform(-a, a) with `a = 1/sqrt(fan_in)`.
pub fn fan_in_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    uniform(shape, a, rng)
}

pub fn uniform<T: Real>(shape: &[usize], a: f64, rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.uniform_range(-a, a))).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

pub fn normal<T: Real>(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(std * rng.normal())).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// N(0, 0.02²), the embedding default.
pub fn embedding<T: Real>(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<T> {
    normal(&[rows, cols], 0.02, rng)
}
