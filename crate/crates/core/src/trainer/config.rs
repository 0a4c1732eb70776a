use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::data::PhantomSpec;
use crate::error::{Error, Result};
use crate::fam::EncoderConfig;
use crate::nn::AdamConfig;
use crate::wia::NoiseConfig;

/// Training variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Wavelet corruption and the feature loss.
    Full,
    /// Wavelet corruption, pixel loss only.
    WiaOnly,
    /// Pixel-domain Gaussian corruption of equal power, pixel loss only.
    WiaStar,
    /// No corruption, pixel loss plus the feature loss.
    FamOnly,
    /// No corruption, pixel loss plus feature-level MSE.
    FamStar,
    /// No corruption, pixel loss only: identity reconstruction.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corruption {
    None,
    Wavelet,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureLoss {
    Fam,
    FamStar,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Baseline, Mode::WiaStar, Mode::WiaOnly, Mode::FamStar, Mode::FamOnly, Mode::Full];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::WiaOnly => "wia_only",
            Mode::WiaStar => "wia_star",
            Mode::FamOnly => "fam_only",
            Mode::FamStar => "fam_star",
            Mode::Baseline => "baseline",
        }
    }

    pub fn corruption(self) -> Corruption {
        match self {
            Mode::Full | Mode::WiaOnly => Corruption::Wavelet,
            Mode::WiaStar => Corruption::Direct,
            Mode::FamOnly | Mode::FamStar | Mode::Baseline => Corruption::None,
        }
    }

    pub fn feature_loss(self) -> Option<FeatureLoss> {
        match self {
            Mode::Full | Mode::FamOnly => Some(FeatureLoss::Fam),
            Mode::FamStar => Some(FeatureLoss::FamStar),
            Mode::WiaOnly | Mode::WiaStar | Mode::Baseline => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub lambda_fam: f64,
    pub ema_momentum: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            epochs: 200,
            batch_size: 1,
            crop: 64,
            lambda_fam: 0.01,
            ema_momentum: 0.99,
            mode: Mode::Full,
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

/// Where training images come from: a dataset directory (its train split),
/// or generated phantoms when no directory is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Range mapped to [-1, 1]; taken from the data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity_range: Option<(f64, f64)>,
    pub phantom_count: usize,
    pub phantom: PhantomSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { dataset: None, intensity_range: None, phantom_count: 200, phantom: PhantomSpec::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub trainer: TrainerSection,
    pub noise: NoiseConfig,
    pub backbone: BackboneConfig,
    pub encoder: EncoderConfig,
    pub data: DataSection,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses the right-hand side of a `key=value` override as a TOML value,
/// falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Sets `dotted.key = value` inside `table`, creating tables as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), parse_override_value(raw.trim()));
    Ok(())
}

impl TrainConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    /// Reads a config file and applies `key=value` overrides. Relative data
    /// paths are resolved against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let (Some(ds), Some(dir)) = (cfg.data.dataset.as_mut(), path.parent()) {
            if ds.is_relative() {
                *ds = dir.join(&*ds);
            }
        }
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.trainer.lr, beta1: self.trainer.adam_beta1, beta2: self.trainer.adam_beta2, ..AdamConfig::default() }
    }

    /// Noise used by `wia_star`: pixel std `sqrt(Σσ²) / 2`, the same power
    /// as the wavelet corruption.
    pub fn direct_sigma(&self) -> f64 {
        self.noise.pixel_std()
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trainer;
        let bad = |m: String| Err(Error::Config(m));
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return bad(format!("trainer.lr must be positive, got {}", t.lr));
        }
        for (name, b) in [("adam_beta1", t.adam_beta1), ("adam_beta2", t.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("trainer.{name} must be in [0, 1), got {b}"));
            }
        }
        if t.epochs == 0 || t.batch_size == 0 {
            return bad("trainer.epochs and trainer.batch_size must be positive".into());
        }
        if !(t.lambda_fam.is_finite() && t.lambda_fam >= 0.0) {
            return bad(format!("trainer.lambda_fam must be non-negative, got {}", t.lambda_fam));
        }
        if !(0.0..=1.0).contains(&t.ema_momentum) {
            return bad(format!("trainer.ema_momentum must be in [0, 1], got {}", t.ema_momentum));
        }
        self.noise.validate()?;
        self.backbone.validate()?;
        self.encoder.validate()?;
        let m = self.backbone.size_multiple();
        if t.crop < 16 || t.crop % 2 != 0 || t.crop % m != 0 {
            return bad(format!("trainer.crop must be even, at least 16 and divisible by {m}, got {}", t.crop));
        }
        if t.mode.feature_loss().is_some() {
            let fm = 2 * self.encoder.size_multiple();
            if t.crop % fm != 0 {
                return bad(format!(
                    "trainer.crop must be divisible by {fm} (8 x encoder.patch_grid) in mode {}, got {}",
                    t.mode.name(),
                    t.crop
                ));
            }
        }
        if self.data.dataset.is_none() {
            self.data.phantom.validate().map_err(|e| Error::Config(e.to_string()))?;
            if self.data.phantom_count == 0 {
                return bad("data.phantom_count must be positive".into());
            }
        }
        if let Some((lo, hi)) = self.data.intensity_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("data.intensity_range must be increasing, got ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.trainer.lr, 1e-4);
        assert_eq!((c.trainer.adam_beta1, c.trainer.adam_beta2), (0.9, 0.99));
        assert_eq!(c.trainer.epochs, 200);
        assert_eq!(c.trainer.lambda_fam, 0.01);
        assert_eq!(c.trainer.ema_momentum, 0.99);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_and_snapshot() {
        let text = "[trainer]\nlambda_fam = 0.5\nmode = \"wia_only\"\n";
        let cfg = TrainConfig::from_toml_str(text, &["trainer.lambda_fam=0".into(), "noise.sigma_ll=12.5".into()]).unwrap();
        assert_eq!(cfg.trainer.lambda_fam, 0.0);
        assert_eq!(cfg.noise.sigma_ll, 12.5);
        assert_eq!(cfg.trainer.mode, Mode::WiaOnly);
        let snap = cfg.to_toml();
        assert!(snap.contains("lambda_fam = 0.0"));
        assert_eq!(TrainConfig::from_toml_str(&snap, &[]).unwrap(), cfg);
        let cfg = TrainConfig::from_toml_str("", &["trainer.mode=fam_star".into()]).unwrap();
        assert_eq!(cfg.trainer.mode, Mode::FamStar);
    }

    #[test]
    fn rejects_bad_values() {
        for o in ["trainer.lambda_fam=-1", "trainer.crop=60", "trainer.typo=1", "noise.sigma_hh=-3", "trainer.mode=\"other\"", "nonsense"] {
            let r = TrainConfig::from_toml_str("", &[o.to_string()]);
            assert!(matches!(r, Err(Error::Config(_)) | Err(Error::InvalidSigma { .. })), "{o}: {r:?}");
        }
        assert!(matches!(TrainConfig::load(Path::new("/nonexistent/cfg.toml"), &[]), Err(Error::Config(m)) if m.contains("/nonexistent/cfg.toml")));
    }
}
