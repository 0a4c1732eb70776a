//! Reconstruction network: a residual encoder–decoder generator.
//!
//! Layout (`C` = `base_channels`, `n` = `n_downsample`):
//!
//! ```text
//! reflect-pad 3, conv 7x7 1->C, IN, ReLU
//! n x [conv 3x3 stride 2, channels doubling, IN, ReLU]
//! n_res_blocks x [reflect-pad 1, conv 3x3, IN, ReLU, reflect-pad 1, conv 3x3, IN] + skip
//! n x [transposed conv 3x3 stride 2, channels halving, IN, ReLU]
//! reflect-pad 3, conv 7x7 C->1, tanh (or identity)
//! ```
//!
//! IN is instance normalization without affine parameters. Convolutions
//! carry biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BoundParams, Initializer, ParamStore, Scalar, Tensor};
use crate::rng;

const NORM_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub base_channels: usize,
    pub n_res_blocks: usize,
    pub n_downsample: usize,
    pub output_activation: OutputActivation,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self { base_channels: 64, n_res_blocks: 9, n_downsample: 2, output_activation: OutputActivation::Tanh }
    }
}

impl BackboneConfig {
    /// Small preset for CPU-scale experiments.
    pub fn desk() -> Self {
        Self { base_channels: 16, n_res_blocks: 3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.n_res_blocks == 0 || self.n_downsample == 0 {
            return Err(Error::Config(
                "backbone base_channels, n_res_blocks and n_downsample must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Spatial dims must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.n_downsample
    }

    /// Checks that an `h` x `w` input can pass through the network.
    pub fn check_input_dims(&self, h: usize, w: usize) -> Result<()> {
        let m = self.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} must be divisible by 2^n_downsample = {m}"
            )));
        }
        // Reflection padding needs pad < dim at every resolution.
        if h / m < 2 || w / m < 2 || h < 4 || w < 4 {
            return Err(Error::Shape(format!("input {h}x{w} is too small for the backbone")));
        }
        Ok(())
    }
}

/// Parameters of one network plus its update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T: Scalar = f32> {
    pub params: ParamStore<T>,
    pub step: u64,
}

/// Exact number of scalar parameters.
pub fn count_parameters<T: Scalar>(state: &ModelState<T>) -> usize {
    state.params.num_scalars()
}

#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    fn channels_at(&self, level: usize) -> usize {
        self.config.base_channels << level
    }

    /// Freshly initialized parameters: weights ~ N(0, 0.02²), zero biases.
    pub fn init<T: Scalar>(&self, seed: u64) -> ModelState<T> {
        let init = Initializer::new(rng::mix(seed, rng::lane::INIT_BACKBONE));
        let mut p = ParamStore::new();
        let mut conv = |name: &str, shape: [usize; 4], bias: usize| {
            p.insert(format!("{name}.weight"), init.normal::<T>(name, &shape, INIT_STD));
            p.insert(format!("{name}.bias"), crate::nn::zeros::<T>(&[bias]));
        };
        let c = self.config.base_channels;
        let n = self.config.n_downsample;
        conv("entry", [c, 1, 7, 7], c);
        for i in 0..n {
            let (ci, co) = (self.channels_at(i), self.channels_at(i + 1));
            conv(&format!("down{i}"), [co, ci, 3, 3], co);
        }
        let cr = self.channels_at(n);
        for r in 0..self.config.n_res_blocks {
            conv(&format!("res{r}.conv1"), [cr, cr, 3, 3], cr);
            conv(&format!("res{r}.conv2"), [cr, cr, 3, 3], cr);
        }
        for i in 0..n {
            let (ci, co) = (self.channels_at(n - i), self.channels_at(n - i - 1));
            // transposed conv weights are (C_in, C_out, k, k)
            conv(&format!("up{i}"), [ci, co, 3, 3], co);
        }
        conv("exit", [1, c, 7, 7], 1);
        ModelState { params: p, step: 0 }
    }

    /// Maps a normalized batch (B, 1, H, W) to the denoised batch.
    pub fn forward<T: Scalar>(&self, p: &BoundParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [_, 1, h, w] = *x.shape() else {
            return Err(Error::Shape(format!("backbone expects (B, 1, H, W), got {:?}", x.shape())));
        };
        self.config.check_input_dims(h, w)?;
        let eps = T::from_f64_lossy(NORM_EPS);
        let w_b = |name: &str| (p.get(&format!("{name}.weight")), p.get(&format!("{name}.bias")));

        let (wt, b) = w_b("entry");
        let mut y = x.reflect_pad2d(3).conv2d(wt, Some(b), 1, 0).instance_norm(eps).relu();
        for i in 0..self.config.n_downsample {
            let (wt, b) = w_b(&format!("down{i}"));
            y = y.conv2d(wt, Some(b), 2, 1).instance_norm(eps).relu();
        }
        for r in 0..self.config.n_res_blocks {
            let (w1, b1) = w_b(&format!("res{r}.conv1"));
            let (w2, b2) = w_b(&format!("res{r}.conv2"));
            let branch = y
                .reflect_pad2d(1)
                .conv2d(w1, Some(b1), 1, 0)
                .instance_norm(eps)
                .relu()
                .reflect_pad2d(1)
                .conv2d(w2, Some(b2), 1, 0)
                .instance_norm(eps);
            y = y.add(&branch);
        }
        for i in 0..self.config.n_downsample {
            let (wt, b) = w_b(&format!("up{i}"));
            y = y.conv_transpose2d(wt, Some(b), 2, 1, 1).instance_norm(eps).relu();
        }
        let (wt, b) = w_b("exit");
        let y = y.reflect_pad2d(3).conv2d(wt, Some(b), 1, 0);
        Ok(match self.config.output_activation {
            OutputActivation::Tanh => y.tanh(),
            OutputActivation::Identity => y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_array;
    use ndarray::{ArrayD, IxDyn};

    fn tiny() -> Backbone {
        Backbone::new(BackboneConfig { base_channels: 2, n_res_blocks: 1, n_downsample: 1, output_activation: OutputActivation::Tanh })
            .unwrap()
    }

    #[test]
    fn default_parameter_count_is_about_11_37m() {
        let state = Backbone::new(BackboneConfig::default()).unwrap().init::<f32>(0);
        let n = count_parameters(&state);
        assert!((n as f64 / 11.37e6 - 1.0).abs() <= 0.02, "{n}");
        // conv weights + biases, 1 input and 1 output channel
        assert_eq!(n, 11_365_633);
    }

    #[test]
    fn single_conv_count_and_empty_count() {
        let mut p = ParamStore::<f32>::new();
        assert_eq!(count_parameters(&ModelState { params: p.clone(), step: 0 }), 0);
        p.insert("c.weight", ArrayD::zeros(IxDyn(&[8, 1, 3, 3])));
        p.insert("c.bias", ArrayD::zeros(IxDyn(&[8])));
        assert_eq!(count_parameters(&ModelState { params: p, step: 0 }), 80);
    }

    #[test]
    fn shape_and_range_contract() {
        let net = Backbone::new(BackboneConfig { base_channels: 4, n_res_blocks: 2, ..Default::default() }).unwrap();
        let state = net.init::<f32>(3);
        let x = Tensor::constant(random_array(&[2, 1, 16, 12], 1).mapv(|v| 30.0 * v as f32));
        let y = net.forward(&state.params.bind(false), &x).unwrap();
        assert_eq!(y.shape(), [2, 1, 16, 12]);
        assert!(y.value().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_indivisible_dims() {
        let net = Backbone::new(BackboneConfig::desk()).unwrap();
        let state = net.init::<f32>(0);
        let x = Tensor::<f32>::zeros(&[1, 1, 18, 16]);
        assert!(matches!(net.forward(&state.params.bind(false), &x), Err(Error::Shape(_))));
        let x = Tensor::<f32>::zeros(&[1, 2, 16, 16]);
        assert!(matches!(net.forward(&state.params.bind(false), &x), Err(Error::Shape(_))));
    }

    #[test]
    fn deterministic_forward() {
        let net = tiny();
        let a = net.init::<f32>(5);
        assert_eq!(a, net.init::<f32>(5));
        assert_ne!(a, net.init::<f32>(6));
        let x = Tensor::constant(random_array(&[1, 1, 8, 8], 2).mapv(|v| v as f32));
        let y1 = net.forward(&a.params.bind(false), &x).unwrap();
        let y2 = net.forward(&a.params.bind(false), &x).unwrap();
        assert_eq!(y1.value(), y2.value());
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Every 100th scalar parameter (1%), 64-bit, relative error <= 1e-3.
        let net = tiny();
        let state = net.init::<f64>(11);
        let mut params = state.params.clone();
        // larger weights so the loss is not dominated by the tanh's flat region
        for (_, v) in params.iter_mut() {
            v.mapv_inplace(|x| x * 20.0);
        }
        let x = Tensor::constant(random_array(&[2, 1, 8, 8], 3));
        let target = Tensor::constant(random_array(&[2, 1, 8, 8], 4).mapv(|v| 0.5 * v));
        let loss = |p: &ParamStore<f64>, bind_trainable: bool| {
            let bound = p.bind(bind_trainable);
            let y = net.forward(&bound, &x).unwrap();
            (y.sub(&target).square().mean_all(), bound)
        };
        let (l, bound) = loss(&params, true);
        let grads = bound.gradients(&l.backward());

        let mut flat: Vec<(String, usize)> = Vec::new();
        for (name, v) in params.iter() {
            flat.extend((0..v.len()).map(|i| (name.clone(), i)));
        }
        let eps = 1e-6;
        let mut checked = 0;
        for (name, idx) in flat.iter().step_by(100) {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.get_mut(name).unwrap().as_slice_mut().unwrap()[*idx] += delta;
                loss(&p, false).0.item()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let analytic = grads[name].as_slice().unwrap()[*idx];
            let scale = numeric.abs().max(analytic.abs()).max(1e-7);
            assert!((numeric - analytic).abs() / scale <= 1e-3, "{name}[{idx}]: {analytic} vs {numeric}");
            checked += 1;
        }
        assert!(checked >= params.num_scalars() / 100);
    }
}
