use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::Image;

/// One random augmentation: optional flips, a rotation by `rot90` quarter
/// turns, then a crop whose corner sits on even coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDraw {
    pub flip_h: bool,
    pub flip_v: bool,
    pub rot90: u8,
    pub top: usize,
    pub left: usize,
}

impl AugmentDraw {
    pub const IDENTITY: Self = Self { flip_h: false, flip_v: false, rot90: 0, top: 0, left: 0 };

    pub fn sample(rng: &mut impl Rng, dim: (usize, usize), crop: usize) -> Result<Self> {
        let flip_h = rng.random::<bool>();
        let flip_v = rng.random::<bool>();
        let rot90 = rng.random_range(0..4u8);
        let (h, w) = if rot90 % 2 == 1 { (dim.1, dim.0) } else { dim };
        check_crop(h, w, crop)?;
        let top = 2 * rng.random_range(0..=(h - crop) / 2);
        let left = 2 * rng.random_range(0..=(w - crop) / 2);
        Ok(Self { flip_h, flip_v, rot90, top, left })
    }

    pub fn apply(&self, img: &Image, crop: usize) -> Result<Image> {
        let mut a: Array2<f64> = img.data().clone();
        if self.flip_h {
            a.invert_axis(Axis(1));
        }
        if self.flip_v {
            a.invert_axis(Axis(0));
        }
        for _ in 0..self.rot90 % 4 {
            // a quarter turn counter-clockwise: transpose, then flip rows
            a = a.reversed_axes();
            a.invert_axis(Axis(0));
        }
        let (h, w) = a.dim();
        check_crop(h, w, crop)?;
        if self.top + crop > h || self.left + crop > w {
            return Err(Error::CropTooLarge { crop, height: h, width: w });
        }
        let out = a.slice(s![self.top..self.top + crop, self.left..self.left + crop]).as_standard_layout().into_owned();
        img.with_data(out)
    }
}

fn check_crop(h: usize, w: usize, crop: usize) -> Result<()> {
    if crop > h || crop > w {
        return Err(Error::CropTooLarge { crop, height: h, width: w });
    }
    Ok(())
}

/// Random flips, quarter turns and an even-aligned `crop` x `crop` crop.
pub fn augment(img: &Image, crop: usize, rng: &mut impl Rng) -> Result<Image> {
    AugmentDraw::sample(rng, img.dim(), crop)?.apply(img, crop)
}
