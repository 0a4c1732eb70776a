//! Wavelet-domain image corruption.
//!
//! A clean image is transformed with [`dwt2`], each subband receives i.i.d.
//! zero-mean Gaussian noise with its own standard deviation, and the result
//! is transformed back. Because the transform is orthonormal, the per-pixel
//! variance of the resulting corruption is the mean of the four subband
//! variances: `(σ_LL² + σ_LH² + σ_HL² + σ_HH²) / 4`.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng;
use crate::wavelet::{dwt2, idwt2, Subband};

/// Per-subband noise standard deviations (native intensity units) and the
/// seed keying every draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_ll: f64,
    pub sigma_lh: f64,
    pub sigma_hl: f64,
    pub sigma_hh: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::MAYO_2016
    }
}

impl NoiseConfig {
    /// Settings used for the Mayo-2016 low-dose CT data.
    pub const MAYO_2016: Self = Self { sigma_ll: 100.0, sigma_lh: 200.0, sigma_hl: 200.0, sigma_hh: 150.0, seed: 0 };

    /// Settings used for the Mayo-2020 low-dose CT data.
    pub const MAYO_2020: Self = Self { sigma_ll: 25.0, sigma_lh: 50.0, sigma_hl: 50.0, sigma_hh: 50.0, seed: 0 };

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mayo2016" => Some(Self::MAYO_2016),
            "mayo2020" => Some(Self::MAYO_2020),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Multiplies all four deviations by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.sigma_ll *= factor;
        self.sigma_lh *= factor;
        self.sigma_hl *= factor;
        self.sigma_hh *= factor;
        self
    }

    pub fn sigma(&self, band: Subband) -> f64 {
        match band {
            Subband::LL => self.sigma_ll,
            Subband::LH => self.sigma_lh,
            Subband::HL => self.sigma_hl,
            Subband::HH => self.sigma_hh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for band in Subband::ALL {
            let value = self.sigma(band);
            if !value.is_finite() || value < 0.0 {
                let name = match band {
                    Subband::LL => "sigma_ll",
                    Subband::LH => "sigma_lh",
                    Subband::HL => "sigma_hl",
                    Subband::HH => "sigma_hh",
                };
                return Err(Error::InvalidSigma { name, value });
            }
        }
        Ok(())
    }

    /// Describes a detail-band sigma smaller than `sigma_ll`, which is
    /// allowed but unusual: corruption is meant to concentrate on the detail
    /// bands.
    pub fn ordering_warning(&self) -> Option<String> {
        let low: Vec<&str> = Subband::HIGH
            .iter()
            .filter(|&&b| self.sigma(b) < self.sigma_ll)
            .map(|b| b.name())
            .collect();
        (!low.is_empty()).then(|| {
            format!(
                "sigma for {} is below sigma_ll = {}; detail bands normally carry the larger noise",
                low.join(", "),
                self.sigma_ll
            )
        })
    }

    /// Expected per-pixel variance of `corrupt(x) - x`.
    pub fn pixel_variance(&self) -> f64 {
        Subband::ALL.iter().map(|&b| self.sigma(b).powi(2)).sum::<f64>() / 4.0
    }

    /// Pixel-domain standard deviation with the same noise power:
    /// `sqrt(Σσ²) / 2`.
    pub fn pixel_std(&self) -> f64 {
        self.pixel_variance().sqrt()
    }
}

fn gaussian_plane(dim: (usize, usize), sigma: f64, seed: u64, lane: u64, draw_index: u64) -> Array2<f64> {
    let mut rng = rng::keyed(seed, lane, draw_index);
    Array2::from_shape_simple_fn(dim, || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    })
}

/// Adds per-subband Gaussian noise in the wavelet domain and inverts.
///
/// Deterministic in `(cfg.seed, draw_index)`; every subband draws from its
/// own keyed stream. The output keeps the input's metadata.
pub fn corrupt(img: &Image, cfg: &NoiseConfig, draw_index: u64) -> Result<Image> {
    cfg.validate()?;
    let mut sb = dwt2(img)?;
    for band in Subband::ALL {
        let sigma = cfg.sigma(band);
        if sigma == 0.0 {
            continue;
        }
        let noise = gaussian_plane(sb.dim(), sigma, cfg.seed, band.index() as u64, draw_index);
        *sb.plane_mut(band) += &noise;
    }
    let out = idwt2(&sb)?;
    img.with_data(out.into_data())
}

/// Adds i.i.d. Gaussian pixel noise with standard deviation `sigma`.
pub fn corrupt_direct(img: &Image, sigma: f64, seed: u64, draw_index: u64) -> Result<Image> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidSigma { name: "sigma", value: sigma });
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let noise = gaussian_plane(img.dim(), sigma, seed, rng::lane::DIRECT_NOISE, draw_index);
    img.with_data(img.data() + &noise)
}
