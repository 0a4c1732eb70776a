use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use wavedenoise_core::data::{load_image, save_image};
use wavedenoise_core::Image;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wavedenoise"));
    c.env_remove(wavedenoise_cli::OUT_DIR_ENV).env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("train.toml");
    fs::write(
        &path,
        r#"[trainer]
epochs = 1
batch_size = 2
crop = 16
checkpoint_every = 1
lambda_fam = 0.5

[backbone]
base_channels = 2
n_res_blocks = 1
n_downsample = 2

[encoder]
stage_channels = [2, 2, 2]
patch_grid = 2
top_k = 2

[data]
phantom_count = 2

[data.phantom]
size = 16
"#,
    )
    .unwrap();
    path
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = walk(dir).into_iter().map(|f| (f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap())).collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn train_with_override_writes_snapshot_log_and_final_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = run(&["train", "--config", p(&cfg), "--out", p(&out), "--set", "trainer.lambda_fam=0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("final.ckpt").exists());
    assert_eq!(fs::read_to_string(out.join("loss.log")).unwrap().lines().count(), 1);
    let snapshot = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("lambda_fam = 0.0"), "{snapshot}");
}

#[test]
fn train_reads_the_output_directory_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("env_out");
    let o = bin().args(["train", "--config", p(&cfg)]).env(wavedenoise_cli::OUT_DIR_ENV, &out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("final.ckpt").exists());
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = run(&["train", "--config", p(&missing), "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(p(&missing)));
}

#[test]
fn phantom_denoise_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    let o = run(&["phantom", "--n", "3", "--size", "16", "--seed", "4", "--out", p(&ph), "--simulate-ldct", "0.25"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ph.join("ldct/phantom_00002_ldct.toml").exists());

    let cfg = tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    assert_eq!(code(&run(&["train", "--config", p(&cfg), "--out", p(&run_dir)])), 0);
    let ckpt = run_dir.join("final.ckpt");

    let den = dir.path().join("den");
    let o = run(&["denoise", "--ckpt", p(&ckpt), "--in", p(&ph.join("ldct")), "--out", p(&den)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("denoised 3 images"));
    let d = load_image(&den.join("phantom_00001_ldct.toml")).unwrap();
    assert_eq!(d.id(), Some("phantom_00001_ldct"));
    assert_eq!(d.dim(), (16, 16));

    let report = dir.path().join("eval.json");
    let o = run(&["evaluate", "--ref", p(&ph), "--test", p(&den), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = doc["images"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let mean: f64 = rows.iter().map(|r| r["psnr_db"].as_f64().unwrap()).sum::<f64>() / 3.0;
    assert!((mean - doc["mean"]["psnr_db"].as_f64().unwrap()).abs() < 1e-9);
    for band in ["LL", "LH", "HL", "HH"] {
        assert!(rows[0]["subband_mse"][band].is_number(), "{band}");
    }

    // single file in, single file out
    let one = dir.path().join("one");
    let o = run(&["denoise", "--ckpt", p(&ckpt), "--in", p(&ph.join("phantom_00000.toml")), "--out", p(&one)]);
    assert_eq!(code(&o), 0);
    assert_eq!(load_image(&one.join("phantom_00000.toml")).unwrap().id(), Some("phantom_00000"));

    // empty directory: nothing to do
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = run(&["denoise", "--ckpt", p(&ckpt), "--in", p(&empty), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 images"));

    // dims the backbone cannot take
    let bad = dir.path().join("bad");
    save_image(&Image::new(Array2::zeros((18, 16)), (0.0, 4095.0)).unwrap().with_id("bad"), &bad.join("bad")).unwrap();
    let o = run(&["denoise", "--ckpt", p(&ckpt), "--in", p(&bad), "--out", p(&dir.path().join("y"))]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("divisible by"));
}

#[test]
fn evaluate_identical_dirs_hits_the_caps_and_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    assert_eq!(code(&run(&["phantom", "--n", "2", "--size", "32", "--out", p(&ph)])), 0);
    let report = dir.path().join("r.json");
    let o = run(&["evaluate", "--ref", p(&ph), "--test", p(&ph), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for r in doc["images"].as_array().unwrap() {
        assert_eq!(r["psnr_db"].as_f64(), Some(100.0));
        assert_eq!(r["ssim_x100"].as_f64(), Some(100.0));
    }
    let other = dir.path().join("other");
    assert_eq!(code(&run(&["phantom", "--n", "3", "--size", "32", "--out", p(&other)])), 0);
    assert_eq!(code(&run(&["evaluate", "--ref", p(&ph), "--test", p(&other), "--out", p(&report)])), 3);
}

#[test]
fn corrupt_preview() {
    let dir = tempfile::tempdir().unwrap();
    let data = Array2::from_shape_fn((128, 128), |(i, j)| 1000.0 + ((i * 7 + j * 3) % 50) as f64);
    let src = dir.path().join("src");
    save_image(&Image::new(data, (0.0, 4095.0)).unwrap().with_id("src"), &src).unwrap();

    let out = dir.path().join("zero");
    let o = run(&["corrupt", "--in", p(&src.with_extension("toml")), "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let a = load_image(&src.with_extension("toml")).unwrap();
    let b = load_image(&out.with_extension("toml")).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-6));

    let out = dir.path().join("mayo");
    let o = run(&["corrupt", "--in", p(&src.with_extension("toml")), "--out", p(&out), "--preset", "mayo2016", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let report: toml::Table = toml::from_str(&fs::read_to_string(out.with_extension("noise.toml")).unwrap()).unwrap();
    let std = report["residual_std"].as_float().unwrap();
    let expected = (100f64.powi(2) + 2.0 * 200f64.powi(2) + 150f64.powi(2)).sqrt() / 2.0;
    assert!((std / expected - 1.0).abs() < 0.03, "{std} vs {expected}");

    let o = run(&["corrupt", "--in", p(&src.with_extension("toml")), "--out", p(&out), "--sigma-hh", "-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn analyze_tables() {
    let dir = tempfile::tempdir().unwrap();
    let a = Image::new(Array2::from_shape_fn((8, 8), |(i, j)| (i * 8 + j) as f64), (0.0, 64.0)).unwrap();
    save_image(&a, &dir.path().join("a")).unwrap();
    // a constant shift lives entirely in LL
    save_image(&a.with_data(a.data() + 3.0).unwrap(), &dir.path().join("b")).unwrap();
    let out = dir.path().join("an.json");
    let run_pair = |x: &str, y: &str| {
        let o = run(&["analyze", "--a", p(&dir.path().join(x)), "--b", p(&dir.path().join(y)), "--out", p(&out)]);
        (code(&o), serde_json::from_str::<serde_json::Value>(&fs::read_to_string(&out).unwrap_or_default()).ok())
    };
    let (c, doc) = run_pair("a.toml", "a.toml");
    assert_eq!(c, 0);
    let doc = doc.unwrap();
    for band in ["LL", "LH", "HL", "HH"] {
        assert_eq!(doc["subband_mse"][band].as_f64(), Some(0.0));
    }
    let (c, doc) = run_pair("a.toml", "b.toml");
    assert_eq!(c, 0);
    let doc = doc.unwrap();
    assert!(doc["subband_mse"]["LL"].as_f64().unwrap() > 0.0);
    for band in ["LH", "HL", "HH"] {
        assert!(doc["subband_mse"][band].as_f64().unwrap().abs() < 1e-20);
    }
    save_image(&Image::new(Array2::zeros((8, 6)), (0.0, 1.0)).unwrap(), &dir.path().join("c")).unwrap();
    assert_eq!(run_pair("a.toml", "c.toml").0, 3);
}

#[test]
fn phantom_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    for d in [&x, &y] {
        assert_eq!(code(&run(&["phantom", "--n", "10", "--size", "32", "--seed", "5", "--out", p(d)])), 0);
    }
    let fx = files_in(&x);
    assert_eq!(fx.len(), 21);
    assert_eq!(fx, files_in(&y));
    assert_eq!(code(&run(&["phantom", "--size", "7", "--out", p(&x)])), 2);
    assert_eq!(code(&run(&["phantom", "--out", p(&x), "--simulate-ldct", "1.5"])), 2);
}

#[test]
fn help_lists_every_flag() {
    for (cmd, flags) in [
        ("train", &["--config", "--out", "--set", "--resume"][..]),
        ("denoise", &["--ckpt", "--in", "--out"]),
        ("evaluate", &["--ref", "--test", "--out", "--peak"]),
        ("corrupt", &["--in", "--out", "--preset", "--sigma-ll", "--sigma-lh", "--sigma-hl", "--sigma-hh", "--seed"]),
        ("analyze", &["--a", "--b", "--out"]),
        ("phantom", &["--n", "--size", "--seed", "--out", "--simulate-ldct"]),
    ] {
        let o = run(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} {f}");
        }
    }
    let top = String::from_utf8_lossy(&run(&["--help"]).stdout).into_owned();
    assert!(top.contains("Exit codes"));
}
