use ndarray::{Array1, Array2, ArrayD, IxDyn};

use super::check_peak;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::raster::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> Array1<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w = Array1::from_shape_fn(SSIM_WINDOW, |i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s = w.sum();
    w / s
}

// Separable weighted sum over every fully contained window.
fn filter_valid(x: &Array2<f64>, taps: &Array1<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let k = taps.len();
    let rows = Array2::from_shape_fn((h, w - k + 1), |(i, j)| (0..k).map(|t| taps[t] * x[[i, j + t]]).sum::<f64>());
    Array2::from_shape_fn((h - k + 1, w - k + 1), |(i, j)| (0..k).map(|t| taps[t] * rows[[i + t, j]]).sum::<f64>())
}

fn check_window(h: usize, w: usize) -> Result<()> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall { height: h, width: w, window: SSIM_WINDOW });
    }
    Ok(())
}

/// Mean structural similarity over all valid 11x11 Gaussian windows.
pub fn ssim(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    check_peak(peak)?;
    reference.require_same_shape(test)?;
    let (h, w) = reference.dim();
    check_window(h, w)?;
    let taps = gaussian_window();
    let (x, y) = (reference.data(), test.data());
    let mu_x = filter_valid(x, &taps);
    let mu_y = filter_valid(y, &taps);
    let xx = filter_valid(&(x * x), &taps);
    let yy = filter_valid(&(y * y), &taps);
    let xy = filter_valid(&(x * y), &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let mut acc = 0.0;
    for ((((&mx, &my), &sxx), &syy), &sxy) in mu_x.iter().zip(&mu_y).zip(&xx).zip(&yy).zip(&xy) {
        let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(acc / mu_x.len() as f64)
}

/// Differentiable SSIM of two (B, 1, H, W) batches, averaged over images
/// and windows.
pub fn ssim_tensor<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, peak: f64) -> Result<Tensor<T>> {
    check_peak(peak)?;
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!("ssim inputs differ: {:?} vs {:?}", x.shape(), y.shape())));
    }
    let [b, 1, h, w] = *x.shape() else {
        return Err(Error::Shape(format!("ssim expects (B, 1, H, W), got {:?}", x.shape())));
    };
    check_window(h, w)?;
    let taps = gaussian_window();
    let k = SSIM_WINDOW;
    let kernel = Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[1, 1, k, k]), |i| T::from_f64_lossy(taps[i[2]] * taps[i[3]])));
    let stack = Tensor::concat(&[x.clone(), y.clone(), x.mul(x), y.mul(y), x.mul(y)], 1);
    let stats = stack.reshape(&[b * 5, 1, h, w]).conv2d(&kernel, None, 1, 0);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let stats = stats.reshape(&[b, 5, oh, ow]);
    let part = |i: usize| stats.narrow(1, i, 1);
    let (mx, my, sxx, syy, sxy) = (part(0), part(1), part(2), part(3), part(4));
    let c1 = T::from_f64_lossy((SSIM_K1 * peak).powi(2));
    let c2 = T::from_f64_lossy((SSIM_K2 * peak).powi(2));
    let two = T::from_f64_lossy(2.0);
    let mxy = mx.mul(&my);
    let (mxx, myy) = (mx.square(), my.square());
    let num = mxy.scale(two).add_scalar(c1).mul(&sxy.sub(&mxy).scale(two).add_scalar(c2));
    let den = mxx.add(&myy).add_scalar(c1).mul(&sxx.sub(&mxx).add(&syy.sub(&myy)).add_scalar(c2));
    Ok(num.div(&den).mean_all())
}
