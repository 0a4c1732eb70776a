use serde_json::json;

use super::config::TrainConfig;
use crate::backbone::ModelState;
use crate::error::{Error, Result};
use crate::fam::EncoderPair;
use crate::nn::{Adam, Checkpoint};

/// Everything needed to continue training bit-compatibly.
///
/// Randomness is keyed by `(seed, global_step)`, so no generator state is
/// stored.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub backbone: ModelState,
    pub encoders: EncoderPair,
    pub backbone_opt: Adam,
    pub encoder_opt: Adam,
    pub global_step: u64,
    /// Native range mapped to [-1, 1] in network space.
    pub intensity_range: (f64, f64),
}

fn meta_err(what: &str) -> Error {
    Error::Format(format!("checkpoint metadata lacks `{what}`"))
}

impl TrainState {
    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_store("backbone", &self.backbone.params);
        ck.put_store("encoder.online", &self.encoders.online);
        ck.put_store("encoder.target", &self.encoders.target);
        ck.put_store("opt.backbone.m", &self.backbone_opt.first_moment);
        ck.put_store("opt.backbone.v", &self.backbone_opt.second_moment);
        ck.put_store("opt.encoder.m", &self.encoder_opt.first_moment);
        ck.put_store("opt.encoder.v", &self.encoder_opt.second_moment);
        ck.meta = json!({
            "global_step": self.global_step,
            "backbone_step": self.backbone.step,
            "backbone_opt_step": self.backbone_opt.step,
            "encoder_opt_step": self.encoder_opt.step,
            "intensity_range": [self.intensity_range.0, self.intensity_range.1],
            "config": config.to_toml(),
        });
        ck
    }

    /// Fills a state shaped like `like` from `ck`.
    pub fn from_checkpoint(ck: &Checkpoint, like: &TrainState) -> Result<Self> {
        let m = &ck.meta;
        let step = |k: &str| m.get(k).and_then(|v| v.as_u64()).ok_or_else(|| meta_err(k));
        let range = m
            .get("intensity_range")
            .and_then(|v| v.as_array())
            .and_then(|a| Some((a.first()?.as_f64()?, a.get(1)?.as_f64()?)))
            .ok_or_else(|| meta_err("intensity_range"))?;
        let opt = |base: &Adam, name: &str, n: u64| -> Result<Adam> {
            Ok(Adam {
                config: base.config,
                step: n,
                first_moment: ck.take_store(&format!("opt.{name}.m"), &base.first_moment)?,
                second_moment: ck.take_store(&format!("opt.{name}.v"), &base.second_moment)?,
            })
        };
        Ok(Self {
            backbone: ModelState {
                params: ck.take_store("backbone", &like.backbone.params)?,
                step: step("backbone_step")?,
            },
            encoders: EncoderPair {
                online: ck.take_store("encoder.online", &like.encoders.online)?,
                target: ck.take_store("encoder.target", &like.encoders.target)?,
                momentum: like.encoders.momentum,
            },
            backbone_opt: opt(&like.backbone_opt, "backbone", step("backbone_opt_step")?)?,
            encoder_opt: opt(&like.encoder_opt, "encoder", step("encoder_opt_step")?)?,
            global_step: step("global_step")?,
            intensity_range: range,
        })
    }
}

/// The training configuration stored in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    let text = ck.meta.get("config").and_then(|v| v.as_str()).ok_or_else(|| meta_err("config"))?;
    TrainConfig::from_toml_str(text, &[])
}
