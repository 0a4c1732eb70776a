//! Synthetic CT-like phantoms and a low-dose degradation model.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng;

/// Parameters of the phantom family. Intensities are in native units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub size: usize,
    /// Inclusive range of the number of ellipses.
    pub n_ellipses: (usize, usize),
    pub ellipse_intensity: (f64, f64),
    pub body_intensity: f64,
    /// Inclusive range of the number of thin lines.
    pub n_lines: (usize, usize),
    /// Magnitude range of the intensity change along a line.
    pub line_contrast: (f64, f64),
    pub intensity_range: (f64, f64),
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            n_ellipses: (3, 6),
            ellipse_intensity: (600.0, 2000.0),
            body_intensity: 1000.0,
            n_lines: (2, 4),
            line_contrast: (300.0, 600.0),
            intensity_range: (0.0, 4095.0),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_owned()));
        if self.size < 8 || self.size % 2 != 0 {
            return bad("phantom size must be even and at least 8");
        }
        if self.n_ellipses.0 == 0 || self.n_ellipses.0 > self.n_ellipses.1 {
            return bad("n_ellipses must be a range with minimum at least 1");
        }
        if self.n_lines.0 > self.n_lines.1 {
            return bad("n_lines must be an ordered range");
        }
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !ordered(self.ellipse_intensity) || !ordered(self.line_contrast) || !self.body_intensity.is_finite() {
            return bad("phantom intensities must be finite, ranges ordered");
        }
        if !ordered(self.intensity_range) || self.intensity_range.0 == self.intensity_range.1 {
            return bad("intensity_range must be a non-empty finite interval");
        }
        Ok(())
    }
}

fn coverage(signed_distance_inside: f64) -> f64 {
    (signed_distance_inside + 0.5).clamp(0.0, 1.0)
}

/// Deterministic phantom number `index` of the family: a soft-edged body
/// disk on a dark background holding piecewise-constant ellipses and thin
/// lines, clamped to `intensity_range`.
pub fn generate_phantom(spec: &PhantomSpec, index: u64) -> Result<Image> {
    spec.validate()?;
    let mut rng = rng::keyed(spec.seed, rng::lane::PHANTOM, index);
    let n = spec.size;
    let s = n as f64;
    let c = s / 2.0;
    let body_r = 0.45 * s * rng.random_range(0.85..1.0);
    let body_aspect = rng.random_range(0.85..1.0);
    let coord = |i: usize, j: usize| (j as f64 + 0.5 - c, i as f64 + 0.5 - c);

    let body = Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = coord(i, j);
        let rho = (x * x + (y / body_aspect).powi(2)).sqrt();
        coverage(body_r - rho)
    });
    let mut img = body.mapv(|b| b * spec.body_intensity);

    let n_ell = rng.random_range(spec.n_ellipses.0..=spec.n_ellipses.1);
    for _ in 0..n_ell {
        let r = 0.6 * body_r * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let (cx, cy) = (r * phi.cos(), r * phi.sin() * body_aspect);
        let a = rng.random_range(0.06..0.25) * s;
        let b = rng.random_range(0.06..0.25) * s;
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let value = rng.random_range(spec.ellipse_intensity.0..=spec.ellipse_intensity.1);
        let (st, ct) = theta.sin_cos();
        for ((i, j), v) in img.indexed_iter_mut() {
            let (x, y) = coord(i, j);
            let (dx, dy) = (x - cx, y - cy);
            let (u, w) = (dx * ct + dy * st, -dx * st + dy * ct);
            let rho = ((u / a).powi(2) + (w / b).powi(2)).sqrt();
            let cov = coverage((1.0 - rho) * a.min(b)) * body[[i, j]];
            *v = *v * (1.0 - cov) + value * cov;
        }
    }

    let n_lines = rng.random_range(spec.n_lines.0..=spec.n_lines.1);
    for _ in 0..n_lines {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let offset = rng.random_range(-0.5..0.5) * body_r;
        let half_len = rng.random_range(0.3..0.8) * body_r;
        let width = rng.random_range(0.6..1.2);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let delta = sign * rng.random_range(spec.line_contrast.0..=spec.line_contrast.1);
        let (st, ct) = theta.sin_cos();
        for ((i, j), v) in img.indexed_iter_mut() {
            let (x, y) = coord(i, j);
            let across = x * st - y * ct - offset;
            let along = x * ct + y * st;
            let cov = (1.0 - across.abs() / width).clamp(0.0, 1.0) * coverage(half_len - along.abs()) * body[[i, j]];
            *v += delta * cov;
        }
    }

    let (lo, hi) = spec.intensity_range;
    img.mapv_inplace(|v| v.clamp(lo, hi));
    Ok(Image::new(img, spec.intensity_range)?.with_id(format!("phantom_{index:05}")))
}

/// Low-dose noise model, in the image's native units.
///
/// The degraded image is `x + a * sqrt(max(x, floor) / dose) * n + (w / sqrt(dose)) * z`,
/// where `z` is white unit Gaussian noise and `n` is unit-variance
/// high-pass noise (white noise minus its 4-neighbour mean, periodic
/// boundary, rescaled), giving the ramp-like texture of filtered
/// back-projection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdctModel {
    pub gain: f64,
    pub floor: f64,
    pub white_sigma: f64,
}

impl Default for LdctModel {
    fn default() -> Self {
        Self { gain: 2.0, floor: 50.0, white_sigma: 20.0 }
    }
}

impl LdctModel {
    pub fn validate(&self) -> Result<()> {
        if [self.gain, self.floor, self.white_sigma].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpec("ldct gain, floor and white_sigma must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Expected per-pixel residual variance at intensity `x`.
    pub fn variance(&self, x: f64, dose: f64) -> f64 {
        (self.gain * self.gain * x.max(self.floor) + self.white_sigma * self.white_sigma) / dose
    }
}

fn white_field(dim: (usize, usize), seed: u64, lane: u64, index: u64) -> Array2<f64> {
    let mut rng = rng::keyed(seed, lane, index);
    Array2::from_shape_simple_fn(dim, || StandardNormal.sample(&mut rng))
}

/// Simulates a low-dose acquisition of `img` at relative dose `dose` in
/// (0, 1]. Deterministic in `(seed, index)`; metadata are kept.
pub fn simulate_ldct(img: &Image, dose: f64, model: &LdctModel, seed: u64, index: u64) -> Result<Image> {
    if !(dose.is_finite() && dose > 0.0 && dose <= 1.0) {
        return Err(Error::InvalidDose(dose));
    }
    model.validate()?;
    let (h, w) = img.dim();
    let z = white_field((h, w), seed, rng::lane::LDCT_SIGNAL, index);
    let norm = 1.25f64.sqrt().recip();
    let shaped = Array2::from_shape_fn((h, w), |(i, j)| {
        let nb = z[[(i + h - 1) % h, j]] + z[[(i + 1) % h, j]] + z[[i, (j + w - 1) % w]] + z[[i, (j + 1) % w]];
        (z[[i, j]] - 0.25 * nb) * norm
    });
    let white = white_field((h, w), seed, rng::lane::LDCT_WHITE, index);
    let inv_sqrt_dose = dose.sqrt().recip();
    let out = Array2::from_shape_fn((h, w), |(i, j)| {
        let x = img.data()[[i, j]];
        x + model.gain * x.max(model.floor).sqrt() * inv_sqrt_dose * shaped[[i, j]]
            + model.white_sigma * inv_sqrt_dose * white[[i, j]]
    });
    img.with_data(out)
}
