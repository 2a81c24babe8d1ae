use serde::{Deserialize, Serialize};

use super::{NnError, Tensor2};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor2<T>>,
    pub second_moment: Vec<Tensor2<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor2<T>]) -> Self {
        let zeros: Vec<Tensor2<T>> = params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect();
        AdamState {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn update(&mut self, params: &mut [&mut Tensor2<T>], grads: &[Tensor2<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} parameters, {} gradients, {} moment tensors",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            p.check_same_shape(g)?;
            p.check_same_shape(m)?;
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bias1 = T::one() - b1.powi(self.step as i32);
        let bias2 = T::one() - b2.powi(self.step as i32);
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.epsilon));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let ps = p.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, &gi) in g.as_slice().iter().enumerate() {
                ms[i] = b1 * ms[i] + one_b1 * gi;
                vs[i] = b2 * vs[i] + one_b2 * gi * gi;
                let m_hat = ms[i] / bias1;
                let v_hat = vs[i] / bias2;
                ps[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
