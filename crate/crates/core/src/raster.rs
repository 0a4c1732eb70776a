use ndarray::Array2;

use crate::error::{Error, Result};

/// A single-channel raster in native intensity units.
///
/// Values are always finite. `intensity_range` is metadata (the span used for
/// normalization and as the default PSNR peak); pixel values are not
/// required to lie inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    data: Array2<f64>,
    intensity_range: (f64, f64),
    id: Option<String>,
}

impl Image {
    pub fn new(data: Array2<f64>, intensity_range: (f64, f64)) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("empty image {h}x{w}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        if !(intensity_range.0.is_finite() && intensity_range.1.is_finite()) {
            return Err(Error::NonFinite("intensity range".into()));
        }
        Ok(Self { data, intensity_range, id: None })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn intensity_range(&self) -> (f64, f64) {
        self.intensity_range
    }

    /// Span of the intensity range.
    pub fn peak(&self) -> f64 {
        self.intensity_range.1 - self.intensity_range.0
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn set_id(&mut self, id: Option<String>) {
        self.id = id;
    }

    /// New image with the same metadata and different pixels.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        let mut out = Self::new(data, self.intensity_range)?;
        out.id = self.id.clone();
        Ok(out)
    }

    pub fn require_same_shape(&self, other: &Image) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// Checks the single-level Haar requirement: both dims even and >= 2.
    pub fn require_even(&self) -> Result<()> {
        let (h, w) = self.dim();
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddDimension { height: h, width: w });
        }
        Ok(())
    }
}
