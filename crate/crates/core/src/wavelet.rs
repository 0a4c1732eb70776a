//! Single-level orthonormal 2-D Haar transform.
//!
//! Filters: `L = [1, 1] / sqrt(2)`, `H = [-1, 1] / sqrt(2)`, applied over
//! non-overlapping 2x2 blocks with stride 2. Rows are filtered first (along
//! each row, i.e. horizontally), then columns. For a block `[[a, b], [c, d]]`:
//!
//! | plane | row filter | column filter | value                  |
//! |-------|------------|---------------|------------------------|
//! | LL    | L          | L             | `(a + b + c + d) / 2`  |
//! | LH    | L          | H             | `(c + d - a - b) / 2`  |
//! | HL    | H          | L             | `(b - a + d - c) / 2`  |
//! | HH    | H          | H             | `(a - b - c + d) / 2`  |
//!
//! HL responds to horizontal intensity changes (vertical edges) and LH to
//! vertical changes (horizontal edges).

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::raster::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    LL,
    LH,
    HL,
    HH,
}

impl Subband {
    pub const ALL: [Subband; 4] = [Subband::LL, Subband::LH, Subband::HL, Subband::HH];
    pub const HIGH: [Subband; 3] = [Subband::LH, Subband::HL, Subband::HH];

    pub fn name(self) -> &'static str {
        match self {
            Subband::LL => "LL",
            Subband::LH => "LH",
            Subband::HL => "HL",
            Subband::HH => "HH",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The four half-resolution coefficient planes of one image, plus the
/// source's intensity range so the inverse can rebuild an [`Image`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    pub ll: Array2<f64>,
    pub lh: Array2<f64>,
    pub hl: Array2<f64>,
    pub hh: Array2<f64>,
    pub intensity_range: (f64, f64),
}

impl SubbandSet {
    pub fn new(
        ll: Array2<f64>,
        lh: Array2<f64>,
        hl: Array2<f64>,
        hh: Array2<f64>,
        intensity_range: (f64, f64),
    ) -> Result<Self> {
        let set = Self { ll, lh, hl, hh, intensity_range };
        set.check_shapes()?;
        Ok(set)
    }

    fn check_shapes(&self) -> Result<()> {
        let dim = self.ll.dim();
        for band in Subband::HIGH {
            if self.plane(band).dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "subband {} is {:?}, LL is {:?}",
                    band.name(),
                    self.plane(band).dim(),
                    dim
                )));
            }
        }
        Ok(())
    }

    /// Shape of each plane.
    pub fn dim(&self) -> (usize, usize) {
        self.ll.dim()
    }

    pub fn plane(&self, band: Subband) -> &Array2<f64> {
        match band {
            Subband::LL => &self.ll,
            Subband::LH => &self.lh,
            Subband::HL => &self.hl,
            Subband::HH => &self.hh,
        }
    }

    pub fn plane_mut(&mut self, band: Subband) -> &mut Array2<f64> {
        match band {
            Subband::LL => &mut self.ll,
            Subband::LH => &mut self.lh,
            Subband::HL => &mut self.hl,
            Subband::HH => &mut self.hh,
        }
    }

    /// Sum of squares over all four planes.
    pub fn energy(&self) -> f64 {
        Subband::ALL
            .iter()
            .map(|&b| self.plane(b).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Forward transform.
pub fn dwt2(img: &Image) -> Result<SubbandSet> {
    img.require_even()?;
    let x = img.data();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dwt2 input".into()));
    }
    let (h, w) = x.dim();
    let (hh_, hw) = (h / 2, w / 2);
    let s = FRAC_1_SQRT_2;

    // Row pass: low/high halves along each row.
    let mut row_lo = Array2::<f64>::zeros((h, hw));
    let mut row_hi = Array2::<f64>::zeros((h, hw));
    for i in 0..h {
        for j in 0..hw {
            let (a, b) = (x[[i, 2 * j]], x[[i, 2 * j + 1]]);
            row_lo[[i, j]] = s * (a + b);
            row_hi[[i, j]] = s * (b - a);
        }
    }
    // Column pass.
    let column = |src: &Array2<f64>| {
        let mut lo = Array2::<f64>::zeros((hh_, hw));
        let mut hi = Array2::<f64>::zeros((hh_, hw));
        for i in 0..hh_ {
            for j in 0..hw {
                let (a, b) = (src[[2 * i, j]], src[[2 * i + 1, j]]);
                lo[[i, j]] = s * (a + b);
                hi[[i, j]] = s * (b - a);
            }
        }
        (lo, hi)
    };
    let (ll, lh) = column(&row_lo);
    let (hl, hh) = column(&row_hi);
    Ok(SubbandSet { ll, lh, hl, hh, intensity_range: img.intensity_range() })
}

/// Exact inverse of [`dwt2`].
pub fn idwt2(sb: &SubbandSet) -> Result<Image> {
    sb.check_shapes()?;
    let (hh_, hw) = sb.dim();
    let s = FRAC_1_SQRT_2;
    // Undo the column pass.
    let uncolumn = |lo: &Array2<f64>, hi: &Array2<f64>| {
        let mut out = Array2::<f64>::zeros((2 * hh_, hw));
        for i in 0..hh_ {
            for j in 0..hw {
                let (l, h) = (lo[[i, j]], hi[[i, j]]);
                out[[2 * i, j]] = s * (l - h);
                out[[2 * i + 1, j]] = s * (l + h);
            }
        }
        out
    };
    let row_lo = uncolumn(&sb.ll, &sb.lh);
    let row_hi = uncolumn(&sb.hl, &sb.hh);
    let mut x = Array2::<f64>::zeros((2 * hh_, 2 * hw));
    for i in 0..2 * hh_ {
        for j in 0..hw {
            let (l, h) = (row_lo[[i, j]], row_hi[[i, j]]);
            x[[i, 2 * j]] = s * (l - h);
            x[[i, 2 * j + 1]] = s * (l + h);
        }
    }
    Image::new(x, sb.intensity_range)
}

/// Packs the detail planes as channels in the order (LH, HL, HH).
pub fn highfreq_stack(sb: &SubbandSet) -> Array3<f64> {
    let (h, w) = sb.dim();
    let mut out = Array3::<f64>::zeros((3, h, w));
    for (c, band) in Subband::HIGH.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), c).assign(sb.plane(*band));
    }
    out
}

/// Haar analysis kernels as a (4, 1, 2, 2) convolution weight, output
/// channels ordered (LL, LH, HL, HH).
fn haar_kernel<T: Scalar>() -> ArrayD<T> {
    #[rustfmt::skip]
    let k = [
        0.5, 0.5, 0.5, 0.5,     // LL
        -0.5, -0.5, 0.5, 0.5,   // LH
        -0.5, 0.5, -0.5, 0.5,   // HL
        0.5, -0.5, -0.5, 0.5,   // HH
    ];
    ArrayD::from_shape_vec(IxDyn(&[4, 1, 2, 2]), k.iter().map(|&v| T::from_f64_lossy(v)).collect())
        .expect("kernel shape")
}

/// Differentiable batched transform: (B, 1, H, W) -> (B, 4, H/2, W/2) with
/// channels (LL, LH, HL, HH). Matches [`dwt2`].
pub fn dwt2_tensor<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    match *x.shape() {
        [_, 1, h, w] if h >= 2 && w >= 2 && h % 2 == 0 && w % 2 == 0 => {
            Ok(x.conv2d(&Tensor::constant(haar_kernel()), None, 2, 0))
        }
        [_, 1, h, w] => Err(Error::OddDimension { height: h, width: w }),
        ref s => Err(Error::Shape(format!("dwt2 expects (B, 1, H, W), got {s:?}"))),
    }
}

/// Differentiable high-frequency stack: (B, 1, H, W) -> (B, 3, H/2, W/2)
/// with channels (LH, HL, HH).
pub fn highfreq_tensor<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(dwt2_tensor(x)?.narrow(1, 1, 3))
}
