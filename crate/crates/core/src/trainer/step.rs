use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::config::{Corruption, FeatureLoss, TrainConfig};
use super::loss::pixel_loss;
use super::state::{checkpoint_config, TrainState};
use crate::backbone::Backbone;
use crate::data::{denormalize, normalize};
use crate::error::{Error, Result};
use crate::fam::{fam_loss, fam_star_loss, Encoder, EncoderPair};
use crate::nn::{Adam, BoundParams, Checkpoint, ParamStore, Tensor};
use crate::raster::Image;
use crate::wavelet::highfreq_tensor;
use crate::wia::{corrupt, corrupt_direct, NoiseConfig};
use crate::rng;

/// Losses of one training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Global step after the update, counting from 1.
    pub step: u64,
    pub l_pixel: f64,
    /// Feature loss on the Phase A output; `None` in modes without one.
    pub l_fam: Option<f64>,
    /// Whether every freezing check held.
    pub audit: bool,
}

/// Which part of the Phase A objective to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossPart {
    Pixel,
    /// `lambda_fam` times the feature loss.
    Feature,
    Total,
}

struct PhaseA {
    x: Tensor<f32>,
    y: Tensor<f32>,
    bound: BoundParams<f32>,
    objective: Tensor<f32>,
    l_pixel: f64,
    l_fam: Option<f64>,
}

/// Models and configuration for one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    backbone: Backbone,
    encoder: Encoder,
}

fn to_batch(arrays: &[ndarray::Array2<f64>]) -> Result<Tensor<f32>> {
    let (h, w) = arrays[0].dim();
    if let Some(a) = arrays.iter().find(|a| a.dim() != (h, w)) {
        return Err(Error::ShapeMismatch(format!("batch mixes {h}x{w} and {}x{} images", a.dim().0, a.dim().1)));
    }
    let mut v = Vec::with_capacity(arrays.len() * h * w);
    for a in arrays {
        v.extend(a.iter().map(|&x| x as f32));
    }
    Ok(Tensor::constant(ArrayD::from_shape_vec(IxDyn(&[arrays.len(), 1, h, w]), v).expect("batch shape")))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let backbone = Backbone::new(config.backbone.clone())?;
        let encoder = Encoder::new(config.encoder.clone())?;
        Ok(Self { config, backbone, encoder })
    }

    /// Rebuilds the trainer and state saved in `ck`.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainState)> {
        let trainer = Self::new(checkpoint_config(ck)?)?;
        let like = trainer.init_state((0.0, 1.0))?;
        let state = TrainState::from_checkpoint(ck, &like)?;
        Ok((trainer, state))
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Noise used for the wavelet corruption, keyed by the run seed.
    fn noise(&self) -> NoiseConfig {
        let n = self.config.noise.clone();
        let seed = rng::mix(self.config.trainer.seed, n.seed);
        n.with_seed(seed)
    }

    pub fn init_state(&self, intensity_range: (f64, f64)) -> Result<TrainState> {
        let seed = self.config.trainer.seed;
        let backbone = self.backbone.init::<f32>(seed);
        let encoders = EncoderPair::new(self.encoder.init::<f32>(seed), self.config.trainer.ema_momentum)?;
        let adam = self.config.adam();
        Ok(TrainState {
            backbone_opt: Adam::new(adam, &backbone.params),
            encoder_opt: Adam::new(adam, &encoders.online),
            backbone,
            encoders,
            global_step: 0,
            intensity_range,
        })
    }

    /// Clean and corrupted batches in network space. Corruption happens in
    /// native units; the draw for slot `i` is `global_step * batch_size + i`.
    fn prepare(&self, state: &TrainState, batch: &[Image]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if batch.is_empty() {
            return Err(Error::Shape("empty training batch".into()));
        }
        let range = state.intensity_range;
        let noise = self.noise();
        let base = state.global_step * self.config.trainer.batch_size as u64;
        let mut clean = Vec::with_capacity(batch.len());
        let mut noisy = Vec::with_capacity(batch.len());
        for (slot, img) in batch.iter().enumerate() {
            let draw = base + slot as u64;
            let corrupted = match self.config.trainer.mode.corruption() {
                Corruption::None => img.clone(),
                Corruption::Wavelet => corrupt(img, &noise, draw)?,
                Corruption::Direct => corrupt_direct(img, self.config.direct_sigma(), noise.seed, draw)?,
            };
            clean.push(normalize(img, range)?);
            noisy.push(normalize(&corrupted, range)?);
        }
        Ok((to_batch(&clean)?, to_batch(&noisy)?))
    }

    fn feature_loss(
        &self,
        kind: FeatureLoss,
        online: &BoundParams<f32>,
        target: &BoundParams<f32>,
        x: &Tensor<f32>,
        y: &Tensor<f32>,
    ) -> Result<Tensor<f32>> {
        let hf_x = highfreq_tensor(x)?;
        let hf_y = highfreq_tensor(y)?;
        match kind {
            FeatureLoss::Fam => fam_loss(&self.encoder, online, target, &hf_x, &hf_y),
            FeatureLoss::FamStar => fam_star_loss(&self.encoder, online, target, &hf_x, &hf_y),
        }
    }

    /// Phase A objective with the encoders frozen. Returns the backbone
    /// output, the bound backbone parameters and the requested loss. The
    /// reported feature loss is computed whenever the mode has one, but only
    /// enters the objective when `lambda_fam > 0`.
    fn phase_a(
        &self,
        state: &TrainState,
        batch: &[Image],
        part: LossPart,
    ) -> Result<PhaseA> {
        let (x, x_noisy) = self.prepare(state, batch)?;
        let bound = state.backbone.params.bind(true);
        let y = self.backbone.forward(&bound, &x_noisy)?;
        let l_pixel = pixel_loss(&x, &y)?;
        let lambda = self.config.trainer.lambda_fam as f32;
        let mut l_feat = None;
        let mut feat_term = None;
        if let Some(kind) = self.config.trainer.mode.feature_loss() {
            let online = state.encoders.online.bind(false);
            let target = state.encoders.target.bind(false);
            if lambda > 0.0 {
                let l = self.feature_loss(kind, &online, &target, &x, &y)?;
                l_feat = Some(f64::from(l.item()));
                feat_term = Some(l.scale(lambda));
            } else {
                let l = self.feature_loss(kind, &online, &target, &x, &y.detach())?;
                l_feat = Some(f64::from(l.item()));
            }
        }
        let lp = f64::from(l_pixel.item());
        let objective = match (part, feat_term) {
            (LossPart::Pixel, _) | (LossPart::Total, None) => l_pixel,
            (LossPart::Feature, Some(f)) => f,
            (LossPart::Feature, None) => l_pixel.scale(0.0),
            (LossPart::Total, Some(f)) => l_pixel.add(&f),
        };
        Ok(PhaseA { x, y, bound, objective, l_pixel: lp, l_fam: l_feat })
    }

    /// Backbone gradients of one part of the Phase A objective, without
    /// updating anything.
    pub fn phase_a_gradients(&self, state: &TrainState, batch: &[Image], part: LossPart) -> Result<BTreeMap<String, ArrayD<f32>>> {
        let a = self.phase_a(state, batch, part)?;
        Ok(a.bound.gradients(&a.objective.backward()))
    }

    /// One alternating update: the backbone on pixel + λ·feature loss with
    /// the encoders frozen, then (in feature-loss modes) the online encoder
    /// on the feature loss of the detached output, then the moving average.
    pub fn train_step(&self, state: &mut TrainState, batch: &[Image]) -> Result<StepReport> {
        let step = state.global_step + 1;
        let PhaseA { x, y, bound, objective, l_pixel, l_fam } = self.phase_a(state, batch, LossPart::Total)?;
        if !l_pixel.is_finite() || l_fam.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { step, pixel: l_pixel, fam: l_fam.unwrap_or(f64::NAN) });
        }
        let grads = bound.gradients(&objective.backward());
        drop(bound);

        let encoders_before = state.encoders.clone();
        state.backbone_opt.step(&mut state.backbone.params, &grads);
        state.backbone.step += 1;
        let mut audit = state.encoders == encoders_before;

        if let Some(kind) = self.config.trainer.mode.feature_loss() {
            let backbone_before = state.backbone.params.clone();
            let target_before = state.encoders.target.clone();
            let online = state.encoders.online.bind(true);
            let target = state.encoders.target.bind(false);
            let l = self.feature_loss(kind, &online, &target, &x, &y.detach())?;
            let v = f64::from(l.item());
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { step, pixel: l_pixel, fam: v });
            }
            let grads = online.gradients(&l.backward());
            drop(online);
            state.encoder_opt.step(&mut state.encoders.online, &grads);
            audit &= state.backbone.params == backbone_before && state.encoders.target == target_before;

            let online_before = state.encoders.online.clone();
            state.encoders.ema_update();
            audit &= state.encoders.online == online_before && state.backbone.params == backbone_before;
        }
        state.global_step = step;
        Ok(StepReport { step, l_pixel, l_fam, audit })
    }

    /// Denoises one image: normalize, forward, denormalize. No corruption is
    /// applied. The output keeps the input's id and intensity range.
    pub fn denoise(&self, state: &TrainState, img: &Image) -> Result<Image> {
        let (h, w) = img.dim();
        self.backbone.config().check_input_dims(h, w)?;
        let x = to_batch(&[normalize(img, state.intensity_range)?])?;
        let y = self.backbone.forward(&state.backbone.params.bind(false), &x)?;
        let out = ndarray::Array2::from_shape_vec((h, w), y.value().iter().map(|&v| f64::from(v)).collect())
            .expect("output shape");
        let native = denormalize(&out, state.intensity_range)?;
        img.with_data(native.into_data())
    }

    /// [`Trainer::denoise`] for arbitrary sizes: reflect-pads up to the
    /// backbone's size multiple, denoises, then crops back.
    pub fn denoise_padded(&self, state: &TrainState, img: &Image) -> Result<Image> {
        let m = self.backbone.config().size_multiple().max(4);
        let (h, w) = img.dim();
        let padded = reflect_pad_to(img, h.div_ceil(m) * m, w.div_ceil(m) * m)?;
        let out = self.denoise(state, &padded)?;
        img.with_data(out.data().slice(ndarray::s![..h, ..w]).to_owned())
    }
}

/// Extends `img` to `h` x `w` by mirroring about its bottom and right edges.
pub fn reflect_pad_to(img: &Image, h: usize, w: usize) -> Result<Image> {
    let (ih, iw) = img.dim();
    if h < ih || w < iw || (h > ih && ih < 2) || (w > iw && iw < 2) || h - ih >= ih || w - iw >= iw {
        return Err(Error::Shape(format!("cannot reflect-pad {ih}x{iw} to {h}x{w}")));
    }
    let mirror = |i: usize, n: usize| if i < n { i } else { 2 * n - 2 - i };
    let data = img.data();
    let out = ndarray::Array2::from_shape_fn((h, w), |(i, j)| data[[mirror(i, ih), mirror(j, iw)]]);
    img.with_data(out)
}

/// Parameters that differ between two stores, for diagnostics.
pub fn changed_parameters(a: &ParamStore<f32>, b: &ParamStore<f32>) -> Vec<String> {
    a.iter().filter(|(k, v)| b.get(k) != Some(*v)).map(|(k, _)| k.clone()).collect()
}
