use wavedenoise_core::backbone::{BackboneConfig, OutputActivation};
use wavedenoise_core::data::{generate_phantom, PhantomSpec};
use wavedenoise_core::fam::EncoderConfig;
use wavedenoise_core::nn::Checkpoint;
use wavedenoise_core::trainer::{
    changed_parameters, training_images, LossPart, Mode, TrainConfig, Trainer, FINAL_CHECKPOINT, LOSS_LOG,
};
use wavedenoise_core::{Error, Image};

fn tiny_config(mode: Mode) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.backbone = BackboneConfig { base_channels: 4, n_res_blocks: 1, n_downsample: 2, output_activation: OutputActivation::Tanh };
    c.encoder = EncoderConfig { stage_channels: [4, 4, 4], patch_grid: 2, top_k: 2, mlp_hidden: None };
    c.trainer.mode = mode;
    c.trainer.crop = 16;
    c.trainer.batch_size = 2;
    c.trainer.epochs = 2;
    c.trainer.checkpoint_every = 1;
    c.trainer.seed = 3;
    c.data.phantom = PhantomSpec { size: 32, ..PhantomSpec::default() };
    c.data.phantom_count = 4;
    c
}

fn fixed_batch(n: usize, size: usize) -> Vec<Image> {
    let spec = PhantomSpec { size, ..PhantomSpec::default() };
    (0..n as u64).map(|i| generate_phantom(&spec, i).unwrap()).collect()
}

#[test]
fn baseline_overfits_a_fixed_batch() {
    let mut cfg = tiny_config(Mode::Baseline);
    cfg.trainer.lr = 1e-3;
    let trainer = Trainer::new(cfg).unwrap();
    let batch = fixed_batch(2, 16);
    let mut state = trainer.init_state((0.0, 4095.0)).unwrap();
    let losses: Vec<f64> = (0..50).map(|_| trainer.train_step(&mut state, &batch).unwrap().l_pixel).collect();
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert_eq!(rises, 0, "{losses:?}");
    assert!(losses[49] < 0.5 * losses[0], "{} -> {}", losses[0], losses[49]);
}

#[test]
fn doubling_lambda_doubles_the_feature_gradient() {
    let batch = fixed_batch(2, 16);
    let grads = |lambda: f64, part: LossPart| {
        let mut cfg = tiny_config(Mode::Full);
        cfg.trainer.lambda_fam = lambda;
        let t = Trainer::new(cfg).unwrap();
        let s = t.init_state((0.0, 4095.0)).unwrap();
        t.phase_a_gradients(&s, &batch, part).unwrap()
    };
    let one = grads(0.25, LossPart::Feature);
    let two = grads(0.5, LossPart::Feature);
    let mut nonzero = 0;
    for (k, g1) in &one {
        let g2 = &two[k];
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_eq!(2.0 * a, *b, "{k}");
            nonzero += usize::from(*a != 0.0);
        }
    }
    assert!(nonzero > 0);

    // with λ = 0 the feature term is reported but never enters the gradient
    let total = grads(0.0, LossPart::Total);
    let pixel = grads(0.0, LossPart::Pixel);
    assert_eq!(total, pixel);
    assert!(grads(0.0, LossPart::Feature).values().all(|g| g.iter().all(|&v| v == 0.0)));
}

#[test]
fn zero_lambda_still_reports_the_feature_loss() {
    let mut cfg = tiny_config(Mode::Full);
    cfg.trainer.lambda_fam = 0.0;
    let t = Trainer::new(cfg).unwrap();
    let mut s = t.init_state((0.0, 4095.0)).unwrap();
    let r = t.train_step(&mut s, &fixed_batch(2, 16)).unwrap();
    assert!(r.l_fam.is_some_and(|v| v.is_finite() && v >= 0.0));
}

#[test]
fn each_phase_touches_only_its_own_parameters() {
    for mode in Mode::ALL {
        let t = Trainer::new(tiny_config(mode)).unwrap();
        let mut s = t.init_state((0.0, 4095.0)).unwrap();
        let before = s.clone();
        let r = t.train_step(&mut s, &fixed_batch(2, 16)).unwrap();
        assert!(r.audit, "{mode:?}");
        assert_eq!(s.global_step, 1);
        assert!(changed_parameters(&before.backbone.params, &s.backbone.params).contains(&"exit.weight".to_string()));
        let online = changed_parameters(&before.encoders.online, &s.encoders.online);
        let target = changed_parameters(&before.encoders.target, &s.encoders.target);
        match mode.feature_loss() {
            Some(_) => {
                assert!(!online.is_empty(), "{mode:?}");
                assert!(!target.is_empty(), "{mode:?}");
                assert!(r.l_fam.is_some());
            }
            None => {
                assert!(online.is_empty() && target.is_empty(), "{mode:?}");
                assert_eq!(r.l_fam, None);
            }
        }
    }
}

#[test]
fn seeded_runs_write_identical_logs() {
    let cfg = tiny_config(Mode::Full);
    let images = training_images(&cfg).unwrap();
    let t = Trainer::new(cfg).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = t.fit(&images, Some(d1.path())).unwrap();
    let b = t.fit(&images, Some(d2.path())).unwrap();
    assert_eq!(a.log.len(), 4);
    assert!(a.log.iter().all(|r| r.audit));
    let la = std::fs::read(d1.path().join(LOSS_LOG)).unwrap();
    assert_eq!(la, std::fs::read(d2.path().join(LOSS_LOG)).unwrap());
    assert_eq!(String::from_utf8(la).unwrap().lines().count(), 4);
    assert_eq!(a.state, b.state);
    for f in [FINAL_CHECKPOINT, "epoch_0001.ckpt", "epoch_0002.ckpt", "config.toml"] {
        assert!(d1.path().join(f).exists(), "{f}");
    }
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let cfg = tiny_config(Mode::Full);
    let images = training_images(&cfg).unwrap();
    let t = Trainer::new(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let full = t.fit(&images, Some(dir.path())).unwrap();

    let ck = Checkpoint::load(&dir.path().join("epoch_0001.ckpt")).unwrap();
    let ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    let (t2, state) = Trainer::from_checkpoint(&ck).unwrap();
    assert_eq!(state.global_step, 2);
    let resumed = t2.fit_from(state, &images, None).unwrap();
    assert_eq!(resumed.log[..], full.log[2..]);
    assert_eq!(resumed.state, full.state);
}

#[test]
fn denoise_keeps_shape_and_metadata() {
    let cfg = tiny_config(Mode::WiaOnly);
    let t = Trainer::new(cfg).unwrap();
    let s = t.init_state((0.0, 4095.0)).unwrap();
    let img = generate_phantom(&PhantomSpec { size: 32, ..PhantomSpec::default() }, 7).unwrap();
    let out = t.denoise(&s, &img).unwrap();
    assert_eq!(out.dim(), img.dim());
    assert_eq!(out.id(), img.id());
    assert_eq!(out.intensity_range(), img.intensity_range());
    assert_eq!(out, t.denoise(&s, &img).unwrap());
    let odd = Image::new(ndarray::Array2::zeros((30, 32)), (0.0, 4095.0)).unwrap();
    assert!(matches!(t.denoise(&s, &odd), Err(Error::Shape(_))));
}

#[test]
fn non_finite_loss_aborts_without_updating() {
    let t = Trainer::new(tiny_config(Mode::Full)).unwrap();
    let mut s = t.init_state((0.0, 4095.0)).unwrap();
    s.backbone.params.get_mut("exit.bias").unwrap().fill(f32::NAN);
    let before = s.clone();
    let r = t.train_step(&mut s, &fixed_batch(2, 16));
    assert!(matches!(r, Err(Error::NonFiniteLoss { step: 1, .. })), "{r:?}");
    assert_eq!(s.global_step, 0);
    assert!(changed_parameters(&before.encoders.online, &s.encoders.online).is_empty());
}

#[test]
fn padded_denoise_accepts_any_size() {
    let t = Trainer::new(tiny_config(Mode::WiaOnly)).unwrap();
    let s = t.init_state((0.0, 4095.0)).unwrap();
    let img = Image::new(ndarray::Array2::from_shape_fn((30, 27), |(i, j)| (i * 40 + j) as f64), (0.0, 4095.0)).unwrap().with_id("odd");
    let out = t.denoise_padded(&s, &img).unwrap();
    assert_eq!(out.dim(), (30, 27));
    assert_eq!(out.id(), Some("odd"));
    let padded = wavedenoise_core::trainer::reflect_pad_to(&img, 32, 28).unwrap();
    assert_eq!(padded.data()[[30, 0]], img.data()[[28, 0]]);
    assert_eq!(padded.data()[[0, 27]], img.data()[[0, 25]]);
}
