use std::collections::BTreeMap;

use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.99, eps: 1e-8 }
    }
}

/// Adam with bias correction. First and second moments are kept per
/// parameter name so they can be checkpointed.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: ParamStore<T>,
    pub second_moment: ParamStore<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// One update of every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, ArrayD<T>>) {
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bias1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bias2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.first_moment.get_mut(name).expect("moment layout matches params");
            Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (one - b1) * g);
            let v = self.second_moment.get_mut(name).expect("moment layout matches params");
            Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (one - b2) * g * g);
            let m = self.first_moment.get(name).expect("present");
            let v = self.second_moment.get(name).expect("present");
            Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
                let mhat = m / bias1;
                let vhat = v / bias2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, IxDyn};

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut params = ParamStore::<f64>::new();
        params.insert("w", arr1(&[1.0, -2.0]).into_dyn());
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &params);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), arr1(&[3.0, -0.5]).into_dyn());
        adam.step(&mut params, &grads);
        let w = params.get("w").unwrap();
        assert!((w[[0]] - 0.9).abs() < 1e-8);
        assert!((w[[1]] + 1.9).abs() < 1e-8);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut params = ParamStore::<f64>::new();
        params.insert("x", ArrayD::from_elem(IxDyn(&[1]), 5.0));
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &params);
        for _ in 0..2000 {
            let x = params.get("x").unwrap()[[0]];
            let mut grads = BTreeMap::new();
            grads.insert("x".to_string(), ArrayD::from_elem(IxDyn(&[1]), 2.0 * (x - 1.0)));
            adam.step(&mut params, &grads);
        }
        assert!((params.get("x").unwrap()[[0]] - 1.0).abs() < 1e-2);
    }
}
