use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{zeros, BoundParams, Initializer, ParamStore, Scalar, Tensor};
use crate::rng;

/// Spatial attention kernel size.
const ATTENTION_KERNEL: usize = 7;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub stage_channels: [usize; 3],
    pub patch_grid: usize,
    pub top_k: usize,
    /// Hidden width of the aggregation MLP; `None` uses the stage's width.
    pub mlp_hidden: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { stage_channels: [32, 64, 128], patch_grid: 8, top_k: 4, mlp_hidden: None }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) {
            return Err(Error::Config("encoder stage_channels must be positive".into()));
        }
        if self.patch_grid < 2 {
            return Err(Error::Config("encoder patch_grid must be at least 2 so patches have neighbours".into()));
        }
        if self.top_k == 0 || self.top_k > 8 {
            return Err(Error::Config(format!("encoder top_k must be in 1..=8, got {}", self.top_k)));
        }
        if self.mlp_hidden == Some(0) {
            return Err(Error::Config("encoder mlp_hidden must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden(&self, scale: usize) -> usize {
        self.mlp_hidden.unwrap_or(self.stage_channels[scale])
    }

    /// High-frequency stacks must have dims divisible by this, so the
    /// coarsest scale still splits into the patch grid.
    pub fn size_multiple(&self) -> usize {
        4 * self.patch_grid
    }
}

/// Weights of one aggregation MLP (C -> hidden -> C, ReLU in between).
#[derive(Clone, Debug)]
pub struct MlpParams<T: Scalar> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Scalar> MlpParams<T> {
    /// Applies the MLP to rows of `x` (M, C).
    pub fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        x.linear(&self.w1, Some(&self.b1)).relu().linear(&self.w2, Some(&self.b2))
    }
}

/// Reweights `f` (B, C, H, W) by a spatial attention map built from its
/// channel-wise max and mean: `f * sigmoid(conv7x7([max, mean]))`.
pub fn freq_attention<T: Scalar>(f: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    f.mul_spatial(&attention_map(f, weight, bias))
}

/// The attention map of [`freq_attention`], shape (B, 1, H, W).
pub fn attention_map<T: Scalar>(f: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let pooled = Tensor::concat(&[f.channel_max(), f.channel_mean()], 1);
    pooled.conv2d(weight, Some(bias), 1, ATTENTION_KERNEL / 2).sigmoid()
}

/// Three-stage convolutional encoder over (LH, HL, HH) stacks.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let init = Initializer::new(rng::mix(seed, rng::lane::INIT_ENCODER));
        let mut p = ParamStore::new();
        let mut c_in = 3;
        for (s, &c) in self.config.stage_channels.iter().enumerate() {
            let name = format!("stage{s}");
            p.insert(format!("{name}.weight"), init.kaiming::<T>(&name, &[c, c_in, 3, 3], 9 * c_in));
            p.insert(format!("{name}.bias"), zeros::<T>(&[c]));
            let name = format!("attn{s}");
            let k = ATTENTION_KERNEL;
            p.insert(format!("{name}.weight"), init.normal::<T>(&name, &[1, 2, k, k], 0.02));
            p.insert(format!("{name}.bias"), zeros::<T>(&[1]));
            let hidden = self.config.hidden(s);
            let name = format!("mlp{s}.fc1");
            p.insert(format!("{name}.weight"), init.kaiming::<T>(&name, &[hidden, c], c));
            p.insert(format!("{name}.bias"), zeros::<T>(&[hidden]));
            let name = format!("mlp{s}.fc2");
            p.insert(format!("{name}.weight"), init.normal::<T>(&name, &[c, hidden], (1.0 / hidden as f64).sqrt()));
            p.insert(format!("{name}.bias"), zeros::<T>(&[c]));
            c_in = c;
        }
        p
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [_, 3, h, w] = *shape else {
            return Err(Error::Shape(format!("encoder expects (B, 3, H, W), got {shape:?}")));
        };
        let m = self.config.size_multiple();
        if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "high-frequency stack {h}x{w} must be divisible by 4 x patch_grid = {m}"
            )));
        }
        Ok(())
    }

    /// Feature maps at strides 1, 2 and 4, each after attention.
    pub fn encode<T: Scalar>(&self, p: &BoundParams<T>, hf: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
        self.check_input(hf.shape())?;
        let mut x = hf.clone();
        let mut out = Vec::with_capacity(3);
        for s in 0..3 {
            let stride = if s == 0 { 1 } else { 2 };
            let f = x
                .conv2d(p.get(&format!("stage{s}.weight")), Some(p.get(&format!("stage{s}.bias"))), stride, 1)
                .relu();
            let f = freq_attention(&f, p.get(&format!("attn{s}.weight")), p.get(&format!("attn{s}.bias")));
            out.push(f.clone());
            x = f;
        }
        Ok(out.try_into().expect("three scales"))
    }

    pub fn mlp<T: Scalar>(&self, p: &BoundParams<T>, scale: usize) -> MlpParams<T> {
        let get = |n: &str| p.get(&format!("mlp{scale}.{n}")).clone();
        MlpParams { w1: get("fc1.weight"), b1: get("fc1.bias"), w2: get("fc2.weight"), b2: get("fc2.bias") }
    }
}
