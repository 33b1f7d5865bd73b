use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::ParamStore;
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// Bias-corrected Adam with one first/second moment buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, params: &ParamStore<F>) -> Self {
        let zeros = || {
            params
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.tensor.shape()))
                .collect()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. A missing gradient is treated as zero.
    pub fn update(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &[Option<Tensor<F>>],
    ) -> Result<()> {
        if grads.len() != self.m.len() || params.params().len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} moment buffers, {} params, {} grads",
                self.m.len(),
                params.params().len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bc1 = F::of(1.0 - c.beta1.powi(t));
        let bc2 = F::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (F::of(c.lr), F::of(c.eps));
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else {
                // Zero gradient still decays the moments.
                self.m[i].data_mut().iter_mut().for_each(|m| *m *= b1);
                self.v[i].data_mut().iter_mut().for_each(|v| *v *= b2);
                continue;
            };
            let p = params.param_mut(i);
            if grad.shape() != p.shape() {
                return Err(Error::Shape(format!("adam: gradient {i} has wrong shape")));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((pj, &g), mj), vj) in p.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *mj = b1 * *mj + (F::one() - b1) * g;
                *vj = b2 * *vj + (F::one() - b2) * g * g;
                let mhat = *mj / bc1;
                let vhat = *vj / bc2;
                *pj -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add_param("x", Tensor::from_vec(&[1], vec![x]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.update(&mut s, &[Some(Tensor::from_vec(&[1], vec![3.7]).unwrap())])
            .unwrap();
        assert!((s.param(0).item() - (1.0 - 1e-3)).abs() < 1e-9);
        let mut s = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.update(
            &mut s,
            &[Some(Tensor::from_vec(&[1], vec![-0.02]).unwrap())],
        )
        .unwrap();
        assert!((s.param(0).item() - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = scalar_store(2.5);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.update(&mut s, &[Some(Tensor::zeros(&[1]))]).unwrap();
        assert_eq!(s.param(0).item(), 2.5);
        assert_eq!(adam.step, 1);
    }

    /// Reference recurrence written out independently of `update`.
    fn reference_adam_on_square(x0: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= lr * (m / (1.0 - b1.powi(t as i32)))
                / ((v / (1.0 - b2.powi(t as i32))).sqrt() + eps);
        }
        x
    }

    #[test]
    fn quadratic_bowl_converges() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut s = scalar_store(5.0);
        let mut adam = Adam::new(cfg, &s);
        for _ in 0..500 {
            let x = s.param(0).item();
            adam.update(
                &mut s,
                &[Some(Tensor::from_vec(&[1], vec![2.0 * x]).unwrap())],
            )
            .unwrap();
        }
        let x = s.param(0).item();
        assert!(x.abs() < 0.01, "x = {x}");
        assert!((x - reference_adam_on_square(5.0, 0.1, 500)).abs() < 1e-12);
    }
}
