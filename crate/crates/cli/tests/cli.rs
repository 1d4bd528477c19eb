use radarim::ccnn::read_checkpoint;
use radarim::sim::Manifest;
use radarim::tensor::{write_crt1_file, ComplexTensor};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = r#"{
  "radar": {"n_range": 16, "n_doppler": 16, "n_antennas": 4, "sweep_duration": 2.6666666666666667e-6},
  "dataset": {"n_train": 3, "n_val": 2, "n_test": 2},
  "cfar": {"guard": 1, "training": 2, "pfa": 0.01},
  "train": {"batch_size": 2, "max_epochs": 3},
  "methods": ["ccnn3d-xs", "zeroing", "ramp", "imat", "none"]
}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("toy.json"), TOY).unwrap();
        Sandbox { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_radarim"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn generate(&self, out: &str, extra: &[&str]) -> PathBuf {
        let mut args = vec!["--config", "toy.json", "generate", "--out", out];
        args.extend_from_slice(extra);
        self.ok(&args);
        self.path(out).join("manifest.json")
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn generate_writes_requested_splits() {
    let sb = Sandbox::new();
    let m = Manifest::load(&sb.generate("data", &["--seed", "4"])).unwrap();
    assert_eq!(
        (
            m.splits.train.len(),
            m.splits.val.len(),
            m.splits.test.len()
        ),
        (3, 2, 2)
    );
    assert_eq!(m.seed, 4);

    let m = Manifest::load(&sb.generate("fixed", &["--fixed-aoa", "45"])).unwrap();
    let all = m
        .splits
        .train
        .iter()
        .chain(&m.splits.val)
        .chain(&m.splits.test);
    for rec in all {
        assert!(rec.interferers.iter().all(|i| i.aoa == 45.0));
    }
}

#[test]
fn generate_failures_leave_no_manifest() {
    let sb = Sandbox::new();
    std::fs::write(sb.path("blocker"), b"a file").unwrap();
    let out = sb.run(&["--config", "toy.json", "generate", "--out", "blocker/data"]);
    assert_eq!(code(&out), 2);
    assert!(!sb.path("blocker/data/manifest.json").exists());

    sb.generate("data", &[]);
    let again = sb.run(&["--config", "toy.json", "generate", "--out", "data"]);
    assert_ne!(code(&again), 0);
    sb.ok(&[
        "--config",
        "toy.json",
        "generate",
        "--out",
        "data",
        "--overwrite",
    ]);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.run(&["frobnicate"])), 1);
    assert_eq!(code(&sb.run(&["generate", "--seed", "x"])), 1);
    std::fs::write(sb.path("bad.json"), r#"{"radar": {"antennas": 4}}"#).unwrap();
    let out = sb.run(&["--config", "bad.json", "generate"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("antennas"));
    let threads = Command::new(env!("CARGO_BIN_EXE_radarim"))
        .env("RADARIM_THREADS", "0")
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 0);
    let threads = Command::new(env!("CARGO_BIN_EXE_radarim"))
        .current_dir(sb.dir.path())
        .env("RADARIM_THREADS", "zero")
        .args(["--config", "toy.json", "generate"])
        .output()
        .unwrap();
    assert_eq!(code(&threads), 1);
    assert!(sb.run(&["--help"]).status.success());
}

#[test]
fn train_is_deterministic_and_resumable() {
    let sb = Sandbox::new();
    sb.generate("data", &[]);
    let train = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "--config",
            "toy.json",
            "--deterministic",
            "train",
            "--manifest",
            "data/manifest.json",
            "--model",
            "ccnn3d-xs",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        sb.ok(&args)
    };
    let stdout = train("a", &[]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "epoch,lr,train_mse,val_mse");
    assert_eq!(lines.len(), 4);
    train("b", &[]);
    assert_eq!(sha(&sb.path("a/model.ckp1")), sha(&sb.path("b/model.ckp1")));
    let ck = read_checkpoint(&sb.path("a/model.ckp1")).unwrap();
    assert_eq!(ck.header.param_count, 780);
    assert_eq!(ck.header.epoch, 2);

    // two epochs, then resume to three
    std::fs::write(
        sb.path("short.json"),
        TOY.replace("\"max_epochs\": 3", "\"max_epochs\": 2"),
    )
    .unwrap();
    sb.ok(&[
        "--config",
        "short.json",
        "--deterministic",
        "train",
        "--manifest",
        "data/manifest.json",
        "--model",
        "ccnn3d-xs",
        "--out",
        "c",
    ]);
    let resumed = train("c", &["--resume", "c/model.ckp1"]);
    assert_eq!(
        resumed.lines().count(),
        2,
        "only the third epoch runs: {resumed}"
    );
    assert_eq!(sha(&sb.path("a/model.ckp1")), sha(&sb.path("c/model.ckp1")));
}

#[test]
fn evaluate_reports_in_table_order() {
    let sb = Sandbox::new();
    sb.generate("data", &[]);
    let base = [
        "--config",
        "toy.json",
        "evaluate",
        "--manifest",
        "data/manifest.json",
    ];

    let missing = sb.run(&base);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("ccnn3d-xs"));

    sb.ok(&[
        "--config",
        "toy.json",
        "train",
        "--manifest",
        "data/manifest.json",
        "--model",
        "ccnn3d-xs",
        "--out",
        "ck",
    ]);
    let mut args = base.to_vec();
    args.extend(["--checkpoint", "ccnn3d-xs=ck/model.ckp1"]);
    args.extend([
        "--fixed-aoa-checkpoint",
        "ccnn3d-xs=ck/model.ckp1",
        "--out",
        "rep",
    ]);
    sb.ok(&args);
    let csv = std::fs::read_to_string(sb.path("rep/aggregate.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        ["method", "ccnn3d-xs", "zeroing", "ramp", "imat", "none"]
    );
    let fixed = std::fs::read_to_string(sb.path("rep/fixed_aoa.csv")).unwrap();
    assert_eq!(fixed.lines().count(), 2);

    let mut args = base.to_vec();
    args.extend(["--methods", "none,imat", "--out", "rep2"]);
    sb.ok(&args);
    let csv = std::fs::read_to_string(sb.path("rep2/aggregate.csv")).unwrap();
    assert!(csv.starts_with("method,F1,EVM,PPMSE\nimat,"));
    assert!(!sb.path("rep2/fixed_aoa.csv").exists());

    let mut args = base.to_vec();
    args.extend(["--checkpoint", "ccnn3d-s=ck/model.ckp1"]);
    assert_eq!(code(&sb.run(&args)), 1);
}

#[test]
fn render_writes_graymap_and_preview() {
    let sb = Sandbox::new();
    let manifest = sb.generate("data", &[]);
    let stdout = sb.ok(&[
        "render",
        "--manifest",
        "data/manifest.json",
        "--sample",
        "test-00001",
        "--source",
        "clean",
        "--out",
        "img",
    ]);
    assert_eq!(stdout.lines().count(), 16);
    let pgm = std::fs::read(sb.path("img/test-00001_clean.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 16\n255\n"));
    assert_eq!(*pgm.iter().skip(13).max().unwrap(), 255);
    sb.ok(&[
        "--config",
        "toy.json",
        "render",
        "--manifest",
        "data/manifest.json",
        "--sample",
        "test-00000",
        "--source",
        "imat",
        "--upsample",
        "1",
        "--out",
        "img",
    ]);
    assert!(sb.path("img/test-00000_imat.txt").exists());

    // a zeroed sample has no dynamic range to draw
    let m = Manifest::load(&manifest).unwrap();
    write_crt1_file(
        &sb.path("data").join(&m.splits.test[0].clean_path),
        &ComplexTensor::zeros(&[16, 16, 4]),
    )
    .unwrap();
    let out = sb.run(&[
        "render",
        "--manifest",
        "data/manifest.json",
        "--sample",
        "test-00000",
        "--source",
        "clean",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate dynamic range"));
    let out = sb.run(&[
        "render",
        "--manifest",
        "data/manifest.json",
        "--sample",
        "test-99999",
    ]);
    assert_eq!(code(&out), 1);
}
