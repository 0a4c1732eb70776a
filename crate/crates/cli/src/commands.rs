use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use wavedenoise_core::data::{generate_phantom, save_image, simulate_ldct, Dataset, LdctModel, PhantomSpec, Split};
use wavedenoise_core::error::{Error, Result};
use wavedenoise_core::metrics::{high_low_ratio, mse, subband_difference, CorpusSummary, MetricsReport};
use wavedenoise_core::nn::Checkpoint;
use wavedenoise_core::trainer::{covering_range, training_images, TrainConfig, TrainState, Trainer};
use wavedenoise_core::wia;
use wavedenoise_core::NoiseConfig;

use crate::listing::list_images;
use crate::{AnalyzeArgs, CommandResult, CorruptArgs, DenoiseArgs, EvaluateArgs, PhantomArgs, TrainArgs};

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn train(a: &TrainArgs) -> Result<CommandResult> {
    let cfg = TrainConfig::load(&a.config, &a.overrides)?;
    let images = training_images(&cfg)?;
    let trainer = Trainer::new(cfg)?;
    let outcome = match &a.resume {
        Some(path) => {
            let like = trainer.init_state(covering_range(&images)?)?;
            let state = TrainState::from_checkpoint(&Checkpoint::load(path)?, &like)?;
            trainer.fit_from(state, &images, Some(&a.out))?
        }
        None => trainer.fit(&images, Some(&a.out))?,
    };
    let last = outcome.log.last();
    let summary = format!(
        "trained {} steps on {} images (mode {}); final l_pixel {}; output in {}",
        outcome.state.global_step,
        images.len(),
        trainer.config().trainer.mode.name(),
        last.map_or("n/a".to_string(), |r| format!("{:.6}", r.l_pixel)),
        a.out.display()
    );
    Ok(CommandResult::ok(outcome.artifacts, summary))
}

pub fn denoise(a: &DenoiseArgs) -> Result<CommandResult> {
    let (trainer, state) = Trainer::from_checkpoint(&Checkpoint::load(&a.ckpt)?)?;
    let inputs = list_images(&a.input)?;
    if inputs.is_empty() {
        return Ok(CommandResult::ok(Vec::new(), format!("denoised 0 images from {}", a.input.display())));
    }
    let mut ds = Dataset { intensity_range: None, items: Vec::new() };
    let mut artifacts = Vec::new();
    for item in &inputs {
        let out = trainer.denoise(&state, &item.image)?;
        artifacts.extend(ds.add_image(&a.out, &out, item.split, item.source.clone())?);
    }
    artifacts.push(ds.save(&a.out)?);
    Ok(CommandResult::ok(artifacts, format!("denoised {} images into {}", inputs.len(), a.out.display())))
}

#[derive(Serialize)]
struct EvalRow {
    id: String,
    reference: String,
    psnr_db: f64,
    ssim_x100: f64,
    subband_mse: BTreeMap<String, f64>,
    nps_radial: Vec<(f64, f64)>,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<CommandResult> {
    let refs = list_images(&a.reference)?;
    let tests = list_images(&a.test)?;
    let by_id: HashMap<&str, _> = refs.iter().map(|r| (r.id(), &r.image)).collect();
    let mut used = HashMap::new();
    for t in &tests {
        if !by_id.contains_key(t.key()) {
            return Err(Error::Format(format!("test image {:?} has no reference with id {:?}", t.id(), t.key())));
        }
        if let Some(prev) = used.insert(t.key(), t.id()) {
            return Err(Error::Format(format!("test images {prev:?} and {:?} share reference {:?}", t.id(), t.key())));
        }
    }
    if let Some(missing) = refs.iter().find(|r| !used.contains_key(r.id())) {
        return Err(Error::Format(format!("reference {:?} has no test image", missing.id())));
    }
    if tests.is_empty() {
        return Err(Error::Format(format!("no images in {}", a.test.display())));
    }
    let mut reports = Vec::with_capacity(tests.len());
    let mut rows = Vec::with_capacity(tests.len());
    for t in &tests {
        let reference = by_id[t.key()];
        let report = MetricsReport::evaluate(reference, &t.image, a.peak.unwrap_or_else(|| reference.peak()))?;
        rows.push(EvalRow {
            id: t.id().to_owned(),
            reference: t.key().to_owned(),
            psnr_db: report.psnr_db,
            ssim_x100: report.ssim_percent(),
            subband_mse: report.subband_mse.clone(),
            nps_radial: report.nps_radial.clone(),
        });
        reports.push(report);
    }
    let s = CorpusSummary::from_reports(&reports)?;
    let doc = json!({
        "images": rows,
        "mean": {
            "count": s.count,
            "psnr_db": s.mean_psnr_db,
            "ssim_x100": 100.0 * s.mean_ssim,
            "subband_mse": s.mean_subband_mse,
            "nps_radial": s.mean_nps_radial,
        },
    });
    let path = write_json(&a.out, &doc)?;
    let summary = format!(
        "{} images: mean PSNR {:.2} dB, mean SSIM {:.2}",
        s.count,
        s.mean_psnr_db,
        100.0 * s.mean_ssim
    );
    Ok(CommandResult::ok(vec![path], summary))
}

fn noise_config(a: &CorruptArgs) -> Result<NoiseConfig> {
    let base = match &a.preset {
        Some(name) => NoiseConfig::preset(name).ok_or_else(|| Error::Config(format!("unknown noise preset {name:?}")))?,
        None => NoiseConfig { sigma_ll: 0.0, sigma_lh: 0.0, sigma_hl: 0.0, sigma_hh: 0.0, seed: 0 },
    };
    let cfg = NoiseConfig {
        sigma_ll: a.sigma_ll.unwrap_or(base.sigma_ll),
        sigma_lh: a.sigma_lh.unwrap_or(base.sigma_lh),
        sigma_hl: a.sigma_hl.unwrap_or(base.sigma_hl),
        sigma_hh: a.sigma_hh.unwrap_or(base.sigma_hh),
        seed: a.seed,
    };
    cfg.validate()?;
    if let Some(w) = cfg.ordering_warning() {
        log::warn!("{w}");
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct NoiseReport {
    sigma_ll: f64,
    sigma_lh: f64,
    sigma_hl: f64,
    sigma_hh: f64,
    seed: u64,
    expected_pixel_std: f64,
    residual_mean: f64,
    residual_std: f64,
}

pub fn corrupt(a: &CorruptArgs) -> Result<CommandResult> {
    let cfg = noise_config(a)?;
    let img = wavedenoise_core::data::load_image(&a.input)?;
    let out = wia::corrupt(&img, &cfg, 0)?;
    let residual = out.data() - img.data();
    let n = residual.len() as f64;
    let mean = residual.sum() / n;
    let std = (residual.mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
    let mut artifacts = save_image(&out, &a.out)?;
    let report = NoiseReport {
        sigma_ll: cfg.sigma_ll,
        sigma_lh: cfg.sigma_lh,
        sigma_hl: cfg.sigma_hl,
        sigma_hh: cfg.sigma_hh,
        seed: cfg.seed,
        expected_pixel_std: cfg.pixel_std(),
        residual_mean: mean,
        residual_std: std,
    };
    let report_path = a.out.with_extension("noise.toml");
    let text = toml::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    artifacts.push(report_path);
    let summary = format!("residual std {std:.4} (expected {:.4})", cfg.pixel_std());
    Ok(CommandResult::ok(artifacts, summary))
}

pub fn analyze(a: &AnalyzeArgs) -> Result<CommandResult> {
    let ia = wavedenoise_core::data::load_image(&a.a)?;
    let ib = wavedenoise_core::data::load_image(&a.b)?;
    let diff = subband_difference(&ia, &ib)?;
    let ratio = high_low_ratio(&diff);
    let table: BTreeMap<&str, f64> = diff.iter().map(|(b, v)| (b.name(), *v)).collect();
    let doc = json!({
        "subband_mse": table,
        "mse": mse(&ia, &ib)?,
        "high_low_ratio": ratio.is_finite().then_some(ratio),
    });
    let path = write_json(&a.out, &doc)?;
    let summary = if ratio.is_finite() {
        format!("high/low frequency MSE ratio {ratio:.4}")
    } else {
        "high/low frequency MSE ratio undefined (no low-frequency difference)".to_string()
    };
    Ok(CommandResult::ok(vec![path], summary))
}

pub fn phantom(a: &PhantomArgs) -> Result<CommandResult> {
    let spec = PhantomSpec { size: a.size, seed: a.seed, ..PhantomSpec::default() };
    spec.validate()?;
    let model = LdctModel::default();
    if let Some(dose) = a.simulate_ldct {
        if !(dose.is_finite() && dose > 0.0 && dose <= 1.0) {
            return Err(Error::InvalidDose(dose));
        }
    }
    let mut clean = Dataset { intensity_range: Some(spec.intensity_range), items: Vec::new() };
    let mut low = Dataset { intensity_range: Some(spec.intensity_range), items: Vec::new() };
    let ldct_dir = a.out.join("ldct");
    let mut artifacts = Vec::new();
    for i in 0..a.n as u64 {
        let img = generate_phantom(&spec, i)?;
        artifacts.extend(clean.add_image(&a.out, &img, Split::Train, None)?);
        if let Some(dose) = a.simulate_ldct {
            let id = img.id().expect("phantoms carry ids").to_owned();
            let noisy = simulate_ldct(&img, dose, &model, a.seed, i)?.with_id(format!("{id}_ldct"));
            artifacts.extend(low.add_image(&ldct_dir, &noisy, Split::Test, Some(id))?);
        }
    }
    artifacts.push(clean.save(&a.out)?);
    let mut summary = format!("wrote {} phantoms of size {} to {}", a.n, a.size, a.out.display());
    if let Some(dose) = a.simulate_ldct {
        artifacts.push(low.save(&ldct_dir)?);
        summary.push_str(&format!(" and low-dose pairs (dose {dose}) to {}", ldct_dir.display()));
    }
    Ok(CommandResult::ok(artifacts, summary))
}
