use crate::error::{Error, Result};
use crate::metrics::ssim_tensor;
use crate::nn::{Scalar, Tensor};

/// Data range of network space, [-1, 1].
pub const NETWORK_PEAK: f64 = 2.0;

/// `MSE(x, y) + (1 - SSIM(x, y))` on (B, 1, H, W) batches in network space.
pub fn pixel_loss<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!("pixel loss inputs differ: {:?} vs {:?}", x.shape(), y.shape())));
    }
    let mse = x.sub(y).square().mean_all();
    let ssim = ssim_tensor(x, y, NETWORK_PEAK)?;
    Ok(mse.sub(&ssim).add_scalar(T::one()))
}
