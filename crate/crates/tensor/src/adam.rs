use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction, over any number of parameter slices.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub hyper: AdamConfig,
}

impl<T: Float> AdamState<T> {
    /// Zeroed accumulators for parameters with the given lengths.
    pub fn new(hyper: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            first_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step_count: 0,
            hyper,
        }
    }

    /// Applies one update to every parameter slice in place.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(TensorError::InvalidArgument(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(TensorError::InvalidArgument(format!(
                    "adam tensor {i}: state {} / param {} / grad {}",
                    self.first_moment[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step_count += 1;
        let h = self.hyper;
        let t = self.step_count as i32;
        let cast = |v: f64| T::from(v).expect("finite hyperparameter");
        let (b1, b2) = (cast(h.beta1), cast(h.beta2));
        let one = T::one();
        let bc1 = cast(1.0 - h.beta1.powi(t));
        let bc2 = cast(1.0 - h.beta2.powi(t));
        let lr = cast(h.learning_rate);
        let eps = cast(h.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] = p[j] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut p = vec![0.5, -1.0, 2.0];
        for _ in 0..10 {
            st.update(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut st = AdamState::<f32>::new(AdamConfig::with_learning_rate(0.01), &[2]);
        let mut p = vec![0.0f32, 0.0];
        for _ in 0..100 {
            st.update(&mut [&mut p], &[&[2.5, -0.3]]).unwrap();
        }
        assert!(p[0] < 0.0);
        assert!(p[1] > 0.0);
    }

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        // m1 = (1-b1) g, v1 = (1-b2) g^2, so after bias correction the step
        // is lr * g / (|g| + eps).
        let lr = 0.05;
        let g = 0.37;
        let mut st = AdamState::<f64>::new(AdamConfig::with_learning_rate(lr), &[1]);
        let mut p = vec![1.0];
        st.update(&mut [&mut p], &[&[g]]).unwrap();
        let expected = 1.0 - lr * g / (g + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!(((1.0 - p[0]) - lr).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(st.update(&mut [&mut p], &[&[0.0; 3]]).is_err());
    }
}
