use std::fs;
use std::path::Path;

use wavedenoise_core::data::{load_image, Dataset, Split, MANIFEST_FILE};
use wavedenoise_core::error::{Error, Result};
use wavedenoise_core::Image;

/// An image found in a directory, with what its manifest says about it.
#[derive(Clone, Debug)]
pub struct Listed {
    pub image: Image,
    pub split: Split,
    pub source: Option<String>,
}

impl Listed {
    pub fn id(&self) -> &str {
        self.image.id().unwrap_or_default()
    }

    /// Key used to pair a test image with its reference.
    pub fn key(&self) -> &str {
        self.source.as_deref().unwrap_or_else(|| self.id())
    }
}

fn is_image_file(path: &Path) -> bool {
    let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match ext.as_deref() {
        Some("png") => true,
        Some("toml") => name != MANIFEST_FILE && !name.ends_with(".noise.toml"),
        _ => false,
    }
}

fn with_stem_id(mut img: Image, path: &Path) -> Image {
    if img.id().is_none() {
        img.set_id(path.file_stem().map(|s| s.to_string_lossy().into_owned()));
    }
    img
}

/// A single image file, or every image of a directory: the manifest's items
/// when there is one, otherwise each sidecar and PNG in name order.
pub fn list_images(path: &Path) -> Result<Vec<Listed>> {
    if !path.is_dir() {
        let image = with_stem_id(load_image(path)?, path);
        return Ok(vec![Listed { image, split: Split::Test, source: None }]);
    }
    if path.join(MANIFEST_FILE).exists() {
        let ds = Dataset::load(path)?;
        return ds
            .items
            .iter()
            .map(|item| {
                let mut image = load_image(&path.join(&item.file))?;
                image.set_id(Some(item.id.clone()));
                Ok(Listed { image, split: item.split, source: item.source.clone() })
            })
            .collect();
    }
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| Ok(Listed { image: with_stem_id(load_image(p)?, p), split: Split::Test, source: None }))
        .collect()
}
