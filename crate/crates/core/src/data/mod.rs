//! Image files, datasets, synthetic phantoms and network-space scaling.

mod dataset;
mod io;
mod phantom;

use ndarray::Array2;

pub use dataset::{Dataset, ManifestItem, Split, MANIFEST_FILE};
pub use io::{load_image, save_image, sidecar_path, Dtype, Sidecar};
pub use phantom::{generate_phantom, simulate_ldct, LdctModel, PhantomSpec};

use crate::error::{Error, Result};
use crate::raster::Image;

fn check_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(Error::DegenerateRange(lo, hi));
    }
    Ok(())
}

/// Affine map of `range` onto [-1, 1].
pub fn normalize(img: &Image, range: (f64, f64)) -> Result<Array2<f64>> {
    check_range(range)?;
    let (lo, hi) = range;
    let scale = 2.0 / (hi - lo);
    Ok(img.data().mapv(|v| (v - lo) * scale - 1.0))
}

/// Inverse of [`normalize`]; the result carries `range` as its metadata.
pub fn denormalize(data: &Array2<f64>, range: (f64, f64)) -> Result<Image> {
    check_range(range)?;
    let (lo, hi) = range;
    let scale = (hi - lo) / 2.0;
    Image::new(data.mapv(|v| (v + 1.0) * scale + lo), range)
}
