use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::augment;
use super::config::TrainConfig;
use super::state::TrainState;
use super::step::Trainer;
use crate::data::{generate_phantom, Dataset, Split};
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng;

pub const LOSS_LOG: &str = "loss.log";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// One line of `loss.log` (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub l_pixel: f64,
    pub l_fam: Option<f64>,
    pub lr: f64,
    pub audit: bool,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub state: TrainState,
    pub log: Vec<LogRecord>,
    /// Files written, in order of first write.
    pub artifacts: Vec<PathBuf>,
}

/// Training images named by `cfg.data`: the train split of the dataset, or
/// `phantom_count` generated phantoms.
pub fn training_images(cfg: &TrainConfig) -> Result<Vec<Image>> {
    let images = match &cfg.data.dataset {
        Some(root) => Dataset::load(root)?.load_images(root, Split::Train)?,
        None => (0..cfg.data.phantom_count as u64)
            .map(|i| generate_phantom(&cfg.data.phantom, i))
            .collect::<Result<_>>()?,
    };
    if images.is_empty() {
        return Err(Error::Format("training set is empty".into()));
    }
    Ok(images)
}

/// Smallest range covering every image's declared range.
pub fn covering_range(images: &[Image]) -> Result<(f64, f64)> {
    let mut it = images.iter().map(Image::intensity_range);
    let first = it.next().ok_or_else(|| Error::Format("training set is empty".into()))?;
    Ok(it.fold(first, |(lo, hi), (a, b)| (lo.min(a), hi.max(b))))
}

struct Output {
    dir: PathBuf,
    log: fs::File,
    artifacts: Vec<PathBuf>,
}

impl Output {
    fn open(dir: &Path, config: &TrainConfig, resume: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let snapshot = dir.join(CONFIG_SNAPSHOT);
        fs::write(&snapshot, config.to_toml()).map_err(|e| Error::io(&snapshot, e))?;
        let log_path = dir.join(LOSS_LOG);
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .append(resume)
            .truncate(!resume)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(Self { dir: dir.to_path_buf(), log, artifacts: vec![snapshot, log_path] })
    }

    fn record(&mut self, r: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(r).expect("log record serializes");
        writeln!(self.log, "{line}").map_err(|e| Error::io(&self.dir.join(LOSS_LOG), e))
    }

    fn checkpoint(&mut self, trainer: &Trainer, state: &TrainState, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        state.to_checkpoint(trainer.config()).save(&path)?;
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path);
        }
        Ok(())
    }
}

impl Trainer {
    pub fn steps_per_epoch(&self, n_images: usize) -> usize {
        n_images.div_ceil(self.config().trainer.batch_size)
    }

    /// Trains from scratch. With `out`, writes the resolved config,
    /// `loss.log`, periodic checkpoints and `final.ckpt` there.
    pub fn fit(&self, images: &[Image], out: Option<&Path>) -> Result<FitOutcome> {
        let range = match self.config().data.intensity_range {
            Some(r) => r,
            None => covering_range(images)?,
        };
        self.fit_from(self.init_state(range)?, images, out)
    }

    /// Continues `state` until `epochs` are complete. A resumed run appends
    /// to the existing log and produces the same records as an
    /// uninterrupted one.
    pub fn fit_from(&self, mut state: TrainState, images: &[Image], out: Option<&Path>) -> Result<FitOutcome> {
        if images.is_empty() {
            return Err(Error::Format("training set is empty".into()));
        }
        let t = &self.config().trainer;
        let mut output = match out {
            Some(dir) => Some(Output::open(dir, self.config(), state.global_step > 0)?),
            None => None,
        };
        let spe = self.steps_per_epoch(images.len());
        let total = (t.epochs * spe) as u64;
        let mut log = Vec::new();
        let mut order: Option<(usize, Vec<usize>)> = None;
        while state.global_step < total {
            let s = state.global_step;
            let epoch = (s / spe as u64) as usize;
            let b = (s % spe as u64) as usize;
            if order.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut perm: Vec<usize> = (0..images.len()).collect();
                perm.shuffle(&mut rng::keyed(t.seed, rng::lane::SHUFFLE, epoch as u64));
                order = Some((epoch, perm));
            }
            let perm = &order.as_ref().expect("set above").1;
            let idx = &perm[b * t.batch_size..((b + 1) * t.batch_size).min(images.len())];
            let batch = idx
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let draw = s * t.batch_size as u64 + slot as u64;
                    augment(&images[i], t.crop, &mut rng::keyed(t.seed, rng::lane::AUGMENT, draw))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = self.train_step(&mut state, &batch)?;
            let rec = LogRecord {
                step: report.step,
                epoch,
                l_pixel: report.l_pixel,
                l_fam: report.l_fam,
                lr: t.lr,
                audit: report.audit,
            };
            if let Some(o) = output.as_mut() {
                o.record(&rec)?;
            }
            log.push(rec);
            if b + 1 == spe {
                log::info!("epoch {}/{} done, step {}, l_pixel {:.5}", epoch + 1, t.epochs, report.step, report.l_pixel);
                if let Some(o) = output.as_mut() {
                    if t.checkpoint_every > 0 && (epoch + 1) % t.checkpoint_every == 0 {
                        o.checkpoint(self, &state, &format!("epoch_{:04}.ckpt", epoch + 1))?;
                    }
                }
            }
        }
        let artifacts = match output.as_mut() {
            Some(o) => {
                o.checkpoint(self, &state, FINAL_CHECKPOINT)?;
                o.artifacts.clone()
            }
            None => Vec::new(),
        };
        Ok(FitOutcome { state, log, artifacts })
    }
}
