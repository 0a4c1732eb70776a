use ndarray::s;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

/// Patch-averaged noise power spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nps {
    /// (spatial frequency in cycles/pixel, mean power) per radial bin.
    pub radial: Vec<(f64, f64)>,
    /// Mean over patches of the summed non-DC power; equals the mean
    /// within-patch variance of the residual.
    pub total_power: f64,
    pub n_patches: usize,
}

/// Periodogram of non-overlapping `patch` x `patch` tiles of `residual`.
///
/// Each tile has its mean removed, `|DFT|² / patch²` is averaged over tiles,
/// and the result is averaged within radial bins `(k, k + 1]` of the integer
/// frequency radius for `k < patch / 2`.
pub fn nps(residual: &Image, patch: usize) -> Result<Nps> {
    let (h, w) = residual.dim();
    if patch < 2 || h % patch != 0 || w % patch != 0 {
        return Err(Error::IndivisiblePatch { height: h, width: w, patch });
    }
    let n = patch;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut power = vec![0.0; n * n];
    let mut buf = vec![Complex::new(0.0, 0.0); n * n];
    let mut col = vec![Complex::new(0.0, 0.0); n];
    let n_patches = (h / n) * (w / n);
    for pi in 0..h / n {
        for pj in 0..w / n {
            let tile = residual.data().slice(s![pi * n..(pi + 1) * n, pj * n..(pj + 1) * n]);
            let mean = tile.sum() / (n * n) as f64;
            for (b, &v) in buf.iter_mut().zip(tile.iter()) {
                *b = Complex::new(v - mean, 0.0);
            }
            for row in buf.chunks_mut(n) {
                fft.process(row);
            }
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr() / (n * n) as f64;
            }
        }
    }
    power.iter_mut().for_each(|p| *p /= n_patches as f64);

    let bins = n / 2;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    for u in 0..n {
        for v in 0..n {
            let r = signed(u).hypot(signed(v));
            if r == 0.0 || r > bins as f64 {
                continue;
            }
            let k = (r.ceil() as usize) - 1;
            sums[k] += power[u * n + v];
            counts[k] += 1;
        }
    }
    let radial = (0..bins)
        .map(|k| ((k as f64 + 0.5) / n as f64, if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 }))
        .collect();
    let total_power = power.iter().sum::<f64>() / (n * n) as f64;
    Ok(Nps { radial, total_power, n_patches })
}
