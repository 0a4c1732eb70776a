//! Dataset directories: a `manifest.toml` plus one sidecar/payload pair per
//! image.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{load_image, save_image};
use crate::error::{Error, Result};
use crate::raster::Image;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub id: String,
    /// Sidecar path relative to the dataset root.
    pub file: String,
    pub split: Split,
    /// Id of the clean image a degraded item was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    /// Range mapped to [-1, 1] for the network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_range: Option<(f64, f64)>,
    #[serde(default)]
    pub items: Vec<ManifestItem>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Format(format!("dataset id {:?} appears more than once", item.id)));
            }
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ds: Dataset = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, root: &Path) -> Result<PathBuf> {
        self.validate()?;
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn items(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    /// Saves `img` under `root` and records it. Returns the written files.
    pub fn add_image(&mut self, root: &Path, img: &Image, split: Split, source: Option<String>) -> Result<Vec<PathBuf>> {
        let id = img.id().ok_or_else(|| Error::Format("dataset images need an id".into()))?.to_owned();
        if self.items.iter().any(|i| i.id == id) {
            return Err(Error::Format(format!("dataset id {id:?} appears more than once")));
        }
        let files = save_image(img, &root.join(&id))?;
        self.items.push(ManifestItem { id: id.clone(), file: format!("{id}.toml"), split, source });
        Ok(files)
    }

    /// Loads every image of `split`, in manifest order. Ids come from the
    /// manifest.
    pub fn load_images(&self, root: &Path, split: Split) -> Result<Vec<Image>> {
        self.items(split)
            .map(|item| {
                let mut img = load_image(&root.join(&item.file))?;
                img.set_id(Some(item.id.clone()));
                Ok(img)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset { intensity_range: Some((0.0, 10.0)), items: Vec::new() };
        for (k, split) in [(0, Split::Train), (1, Split::Train), (2, Split::Test)] {
            let img = Image::new(Array2::from_elem((4, 4), k as f64), (0.0, 10.0)).unwrap().with_id(format!("im{k}"));
            ds.add_image(dir.path(), &img, split, None).unwrap();
        }
        let dup = Image::new(Array2::zeros((4, 4)), (0.0, 1.0)).unwrap().with_id("im0");
        assert!(ds.add_image(dir.path(), &dup, Split::Test, None).is_err());
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        let train = back.load_images(dir.path(), Split::Train).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[1].data()[[0, 0]], 1.0);
        assert_eq!(back.load_images(dir.path(), Split::Test).unwrap()[0].id(), Some("im2"));
    }
}
