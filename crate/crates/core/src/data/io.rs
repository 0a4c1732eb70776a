//! Image files: a TOML sidecar describing a little-endian raw payload.
//!
//! `slice_001.toml`:
//!
//! ```toml
//! shape = [64, 64]
//! dtype = "f32"
//! intensity_range = [0.0, 4095.0]
//! id = "slice_001"
//! payload = "slice_001.raw"
//! ```
//!
//! 16-bit grayscale PNGs can be imported as well.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    U16,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U16 => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub shape: [usize; 2],
    pub dtype: Dtype,
    pub intensity_range: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Payload file name relative to the sidecar; defaults to the sidecar's
    /// stem with a `.raw` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

/// Sidecar path for `path`, which may name the sidecar, the payload or the
/// bare stem.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

/// Writes `<stem>.toml` and `<stem>.raw` next to `path`; returns both paths.
///
/// Data are stored as 32-bit floats when every value converts exactly, and
/// as 64-bit floats otherwise, so saving never loses information.
pub fn save_image(img: &Image, path: &Path) -> Result<Vec<PathBuf>> {
    let exact_f32 = img.data().iter().all(|&v| f64::from(v as f32) == v);
    let dtype = if exact_f32 { Dtype::F32 } else { Dtype::F64 };
    let meta_path = sidecar_path(path);
    let raw_path = path.with_extension("raw");
    let (h, w) = img.dim();
    let mut bytes = Vec::with_capacity(h * w * dtype.size());
    for &v in img.data().iter() {
        match dtype {
            Dtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            _ => bytes.extend_from_slice(&v.to_le_bytes()),
        }
    }
    let sidecar = Sidecar {
        shape: [h, w],
        dtype,
        intensity_range: img.intensity_range(),
        id: img.id().map(str::to_owned),
        payload: raw_path.file_name().map(|n| n.to_string_lossy().into_owned()),
    };
    if let Some(dir) = meta_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = toml::to_string(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec![meta_path, raw_path])
}

/// Loads an image from a sidecar/payload pair or a grayscale PNG.
///
/// Unsigned 16-bit data are promoted to float with intensity range
/// `(0, 65535)`.
pub fn load_image(path: &Path) -> Result<Image> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return load_png(path);
    }
    let meta_path = sidecar_path(path);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: Sidecar =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    let raw_path = match &sidecar.payload {
        Some(name) => meta_path.with_file_name(name),
        None => path.with_extension("raw"),
    };
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let [h, w] = sidecar.shape;
    let expected = h * w * sidecar.dtype.size();
    if h == 0 || w == 0 || bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: declared shape {h}x{w} {:?} needs {expected} bytes, payload has {}",
            raw_path.display(),
            sidecar.dtype,
            bytes.len()
        )));
    }
    let values: Vec<f64> = match sidecar.dtype {
        Dtype::F32 => bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect(),
        Dtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::U16 => bytes.chunks_exact(2).map(|c| f64::from(u16::from_le_bytes(c.try_into().unwrap()))).collect(),
    };
    let range = match sidecar.dtype {
        Dtype::U16 => (0.0, 65535.0),
        _ => sidecar.intensity_range,
    };
    let data = Array2::from_shape_vec((h, w), values).expect("length checked");
    let img = Image::new(data, range).map_err(|e| Error::Format(format!("{}: {e}", raw_path.display())))?;
    Ok(match sidecar.id {
        Some(id) => img.with_id(id),
        None => img,
    })
}

fn load_png(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let (data, range) = match decoded {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(f64::from).collect();
            (Array2::from_shape_vec((h as usize, w as usize), v).expect("png size"), (0.0, 65535.0))
        }
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let v = buf.into_raw().into_iter().map(f64::from).collect();
            (Array2::from_shape_vec((h as usize, w as usize), v).expect("png size"), (0.0, 255.0))
        }
        other => {
            return Err(Error::Format(format!(
                "{}: only 8- or 16-bit grayscale PNGs are supported, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let img = Image::new(data, range)?;
    Ok(match id {
        Some(id) => img.with_id(id),
        None => img,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array2::from_shape_simple_fn((64, 64), || f64::from(rng.random::<f32>() * 4000.0 - 1000.0));
        let img = Image::new(data, (-1000.0, 3000.0)).unwrap().with_id("r");
        let files = save_image(&img, &dir.path().join("r")).unwrap();
        assert_eq!(files.len(), 2);
        let back = load_image(&dir.path().join("r.toml")).unwrap();
        assert_eq!(back, img);
        assert_eq!(fs::metadata(&files[1]).unwrap().len(), 64 * 64 * 4);

        // values that need 64 bits stay exact too
        let fine = Image::new(Array2::from_elem((2, 2), 0.1), (0.0, 1.0)).unwrap();
        save_image(&fine, &dir.path().join("f")).unwrap();
        assert_eq!(load_image(&dir.path().join("f.raw")).unwrap(), fine);
    }

    #[test]
    fn declared_shape_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(Array2::zeros((4, 4)), (0.0, 1.0)).unwrap();
        save_image(&img, &dir.path().join("a")).unwrap();
        let meta = dir.path().join("a.toml");
        let text = fs::read_to_string(&meta).unwrap().replace("shape = [4, 4]", "shape = [4, 5]");
        fs::write(&meta, text).unwrap();
        assert!(matches!(load_image(&meta), Err(Error::Format(_))));
        assert!(matches!(load_image(&dir.path().join("missing.toml")), Err(Error::Io { .. })));
    }

    #[test]
    fn u16_payloads_are_promoted() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u8> = [0u16, 1, 65535, 300].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.path().join("u.raw"), raw).unwrap();
        fs::write(dir.path().join("u.toml"), "shape = [2, 2]\ndtype = \"u16\"\nintensity_range = [0.0, 1.0]\n").unwrap();
        let img = load_image(&dir.path().join("u.toml")).unwrap();
        assert_eq!(img.intensity_range(), (0.0, 65535.0));
        assert_eq!(img.data()[[1, 0]], 65535.0);

        let png = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(2, 1, vec![7, 65000]).unwrap();
        png.save(dir.path().join("p.png")).unwrap();
        let img = load_image(&dir.path().join("p.png")).unwrap();
        assert_eq!(img.dim(), (1, 2));
        assert_eq!(img.data()[[0, 1]], 65000.0);
        assert_eq!(img.intensity_range(), (0.0, 65535.0));
        assert_eq!(img.id(), Some("p"));
    }
}
