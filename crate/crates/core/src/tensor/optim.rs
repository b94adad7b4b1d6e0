use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are matched to parameters by
/// position, so always pass the same parameter list in the same order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every non-frozen parameter and clears its
    /// gradient. Every trainable parameter must carry a gradient.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        for p in params.iter() {
            if p.frozen {
                continue;
            }
            match &p.value.grad {
                None => return Err(Error::MissingGrad { name: p.name.clone() }),
                Some(g) if g.len() != p.value.len() => {
                    return Err(Error::Shape(format!(
                        "gradient for `{}` has {} values, parameter has {}",
                        p.name,
                        g.len(),
                        p.value.len()
                    )))
                }
                Some(_) => {}
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.moments.len(),
                params.len()
            )));
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            if p.frozen {
                continue;
            }
            if m.len() != p.value.len() {
                return Err(Error::Shape(format!("moment buffer mismatch for `{}`", p.name)));
            }
            let g = p.value.grad.take().expect("checked above");
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(v: f32) -> Param {
        Param::new("w", Tensor::scalar(v))
    }

    #[test]
    fn zero_grad_is_a_fixed_point() {
        let mut p = Param::new("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        p.value.grad = Some(vec![0.0; 3]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t = 1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps).
        let mut p = scalar_param(3.0);
        p.value.grad = Some(vec![1.0]);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.value.data()[0] - 2.9).abs() < 1e-6);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut p = scalar_param(1.0);
        p.name = "enc.ff.w1".into();
        let err = Adam::new(AdamConfig::default()).step(&mut [&mut p]).unwrap_err();
        assert!(err.to_string().contains("enc.ff.w1"));
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut p = scalar_param(1.0);
        p.frozen = true;
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[1.0]);
    }

    #[test]
    fn descends_a_convex_quadratic() {
        // loss = (w - 2)^2
        let loss = |w: f32| (w - 2.0) * (w - 2.0);
        let mut p = scalar_param(-1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        let mut prev = loss(p.value.data()[0]);
        for _ in 0..2 {
            let w = p.value.data()[0];
            p.value.grad = Some(vec![2.0 * (w - 2.0)]);
            adam.step(&mut [&mut p]).unwrap();
            let now = loss(p.value.data()[0]);
            assert!(now < prev);
            prev = now;
        }
    }
}
