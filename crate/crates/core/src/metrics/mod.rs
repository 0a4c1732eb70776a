//! Image-quality metrics and frequency analysis.

mod nps;
mod report;
mod ssim;

use std::collections::BTreeMap;

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::wavelet::{dwt2, Subband};

pub use nps::{nps, Nps};
pub use report::{CorpusSummary, MetricsReport};
pub use ssim::{gaussian_window, ssim, ssim_tensor, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub(crate) fn check_peak(peak: f64) -> Result<()> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidSpec(format!("peak must be positive and finite, got {peak}")));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.require_same_shape(b)?;
    let mut acc = 0.0;
    Zip::from(a.data()).and(b.data()).for_each(|&x, &y| acc += (x - y) * (x - y));
    Ok(acc / a.data().len() as f64)
}

/// `10 log10(peak² / MSE)` in dB; [`PSNR_CAP_DB`] when the images are equal.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    check_peak(peak)?;
    let m = mse(reference, test)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Per-subband squared error between `dwt2(a)` and `dwt2(b)`, each divided
/// by the pixel count of the full image, so the four entries add up to the
/// image-domain MSE.
pub fn subband_difference(a: &Image, b: &Image) -> Result<BTreeMap<Subband, f64>> {
    a.require_same_shape(b)?;
    let (sa, sb) = (dwt2(a)?, dwt2(b)?);
    let n = a.data().len() as f64;
    Ok(Subband::ALL
        .iter()
        .map(|&band| {
            let mut acc = 0.0;
            Zip::from(sa.plane(band)).and(sb.plane(band)).for_each(|&x, &y| acc += (x - y) * (x - y));
            (band, acc / n)
        })
        .collect())
}

/// Mean of the three detail-band entries over the LL entry.
pub fn high_low_ratio(diff: &BTreeMap<Subband, f64>) -> f64 {
    let high = Subband::HIGH.iter().map(|b| diff[b]).sum::<f64>() / 3.0;
    high / diff[&Subband::LL]
}
