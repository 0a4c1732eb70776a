//! Inputs shared by the benchmarks.

use ndarray::{Array2, ArrayD, Dimension, IxDyn};
use wavedenoise_core::data::{generate_phantom, PhantomSpec};
use wavedenoise_core::nn::Tensor;
use wavedenoise_core::Image;

pub fn phantom(size: usize) -> Image {
    generate_phantom(&PhantomSpec { size, ..PhantomSpec::default() }, 0).expect("valid phantom spec")
}

/// A smooth deterministic image in [0, 1].
pub fn ramp(size: usize) -> Image {
    let data = Array2::from_shape_fn((size, size), |(i, j)| ((i * 31 + j * 17) % 97) as f64 / 96.0);
    Image::new(data, (0.0, 1.0)).expect("finite data")
}

/// Deterministic (B, C, H, W) tensor with values in [-1, 1].
pub fn tensor(shape: &[usize]) -> Tensor<f32> {
    let data = ArrayD::from_shape_fn(IxDyn(shape), |i| {
        let k: usize = i.slice().iter().enumerate().map(|(a, &b)| (a + 3) * b).sum();
        ((k * 7919) % 201) as f32 / 100.0 - 1.0
    });
    Tensor::constant(data)
}
