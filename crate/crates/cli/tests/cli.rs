//! End-to-end runs of the `tta-sr` binary on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
version = 1
seed = 3

[degradation]
scale = 2

[model]
n_resblocks = 1
n_feats = 8

[train]
epochs = 2
batch_size = 4
lr_crop = 8

[adapt]
m = 2
k = 2
crop = 8
epochs = 2
crops_per_epoch = 4

[extractor]
k_store = 4

[extractor.training]
epochs = 1
crop = 16
batch_size = 8

[analysis]
max_steps = 3
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tta-sr"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).arg("--config").arg(dir.join("tta-sr.toml")).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Corpus, test set, extractor, index and baseline for the tiny config.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tta-sr.toml"), TINY).unwrap();
    ok(run(d, &["make-corpus", "--out", "corpus", "--count", "16", "--size", "32"]));
    ok(run(d, &["make-corpus", "--out", "testset", "--count", "2", "--size", "24", "--prefix", "t", "--seed", "5"]));
    ok(run(d, &["train-extractor"]));
    ok(run(d, &["build-index"]));
    ok(run(d, &["train"]));
    dir
}

fn lr_input(d: &Path) -> PathBuf {
    let hr = tta_sr::imaging::io::load_png::<f32>(d.join("testset/smooth/t00000.png")).unwrap();
    let pair = tta_sr::imaging::make_pair(hr, &tta_sr::imaging::DegradationSpec::bicubic(2), "t").unwrap();
    let path = d.join("input.png");
    tta_sr::imaging::io::save_png(&pair.lr, &path).unwrap();
    path
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = prepared();
    let d = dir.path();
    for f in ["out/extractor.safetensors", "out/index.json", "out/baseline.safetensors", "out/train_loss.csv", "out/extractor_training.csv"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let index = std::fs::read_to_string(d.join("out/index.json")).unwrap();
    assert!(index.contains("\"config_fingerprint\""));

    let input = lr_input(d);
    let stdout = ok(run(d, &["adapt", "--input", input.to_str().unwrap(), "--gt", "testset/smooth/t00000.png"]));
    assert!(stdout.contains("activated.png"));
    let trace = std::fs::read_to_string(d.join("out/adapt/input/trace.json")).unwrap();
    assert!(trace.contains("\"psnr\""));
    ok(run(d, &["adapt", "--input", input.to_str().unwrap(), "--random-set"]));
    assert!(d.join("out/adapt/input_random/activated.png").is_file());

    ok(run(d, &["evaluate", "--testset", "testset"]));
    for f in ["eval_report.json", "per_image.csv", "summary.csv", "delta_psnr.svg", "delta_ssim.svg"] {
        assert!(d.join("out/evaluate").join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(d.join("out/evaluate/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3, "header plus epochs 0..=2");

    ok(run(d, &["analyze-filters", "--testset", "testset"]));
    let svg = std::fs::read_to_string(d.join("out/analysis/correlation.svg")).unwrap();
    for label in ["G&apos; (matched set)", "G_rand (random set)", "baseline"] {
        assert!(svg.contains(label) || svg.contains(&label.replace("&apos;", "'")), "series {label} missing");
    }
    let csv = std::fs::read_to_string(d.join("out/analysis/correlation.csv")).unwrap();
    assert!(csv.starts_with("epoch,mean_rho_matched,mean_rho_random,baseline_rho,n_images,n_excluded_filters"));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = prepared();
    let d = dir.path();
    let straight = std::fs::read(d.join("out/baseline.safetensors")).unwrap();
    std::fs::remove_file(d.join("out/baseline.safetensors")).unwrap();
    ok(run(d, &["train", "--epochs", "1"]));
    ok(run(d, &["train", "--epochs", "2", "--resume"]));
    let resumed = std::fs::read(d.join("out/baseline.safetensors")).unwrap();
    assert!(resumed == straight, "resumed checkpoint differs");
}

#[test]
fn mismatched_artifacts_exit_with_compatibility_code() {
    let dir = prepared();
    let d = dir.path();
    let input = lr_input(d);
    // an index rebuilt under a different config no longer matches the baseline
    let out = bin().current_dir(d).args(["--config", "tta-sr.toml", "--seed", "4", "build-index"]).output().unwrap();
    assert!(out.status.success());
    let out = run(d, &["adapt", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tta-sr.toml"), "version = 1\nbogus = true\n").unwrap();
    assert_eq!(run(d, &["build-index"]).status.code(), Some(2));

    std::fs::write(d.join("tta-sr.toml"), TINY).unwrap();
    assert_eq!(run(d, &["build-index"]).status.code(), Some(2), "missing corpus");

    std::fs::create_dir_all(d.join("corpus")).unwrap();
    std::fs::create_dir_all(d.join("out")).unwrap();
    std::fs::write(d.join("out/.tta-sr.lock"), "1").unwrap();
    let out = run(d, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));

    assert_eq!(bin().arg("no-such-verb").output().unwrap().status.code(), Some(2));
}

#[test]
fn init_config_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(bin().current_dir(d).args(["--seed", "5", "init-config", "--out", "tta-sr.toml"]).output().unwrap());
    let cfg = tta_sr_cli::config::RunConfig::load(d.join("tta-sr.toml")).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.adapt.epochs, 30);
}
