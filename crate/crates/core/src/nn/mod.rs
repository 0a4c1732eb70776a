//! Minimal neural-network toolkit: a reverse-mode autodiff tensor, the
//! layer operations the denoiser and loss encoders need, Adam, and the
//! checkpoint format.

mod adam;
mod checkpoint;
mod conv;
mod dense;
mod ops;
mod params;
mod tensor;

#[cfg(test)]
pub(crate) mod gradcheck;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Manifest, TensorEntry};
pub use params::{BoundParams, ParamStore};
pub use tensor::{Gradients, Scalar, Tensor};

#[allow(unused_imports)]
pub(crate) use params::{zeros, Initializer};

/// Exact number of scalar parameters in a store.
pub fn count_parameters<T: Scalar>(params: &ParamStore<T>) -> usize {
    params.num_scalars()
}
