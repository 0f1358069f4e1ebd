//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::Tensor;

/// Uniform in `±1/sqrt(fan_in)`, the usual default for dense and conv layers.
pub fn fan_in_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape product")
}
