//! Black-box tests of the `kdistill` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kdistill::cli::dir_digest;
use kdistill::distill::SyntheticSet;

const SMALL: &str = r#"
seed = 5
[embed]
epochs = 1
[distill]
iterations = 4
ipc = 2
[eval]
epochs = 2
full_epochs = 1
seeds = [0]
[bench]
methods = ["dm"]
ipcs = [1]
ratios = [0.05]
seeds = [0]
"#;

fn setup(extra: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("{SMALL}\n{extra}")).unwrap();
    (dir, cfg)
}

fn kdistill(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdistill"))
        .arg("--config")
        .arg(cfg)
        .arg("--output")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_ratio_exits_with_validation_code() {
    let (dir, cfg) = setup("");
    let o = kdistill(&cfg, &dir.path().join("out"), &["generate", "--ratio", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1.5"), "{}", stderr(&o));
    assert!(!dir.path().join("out/dataset").exists());
}

#[test]
fn generate_is_reproducible() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    let first = dir_digest(&out.join("dataset")).unwrap();
    fs::remove_dir_all(&out).unwrap();
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    assert_eq!(first, dir_digest(&out.join("dataset")).unwrap());
    assert!(out.join("resolved_config.toml").exists());
}

#[test]
fn distill_before_generate_names_the_missing_step() {
    let (dir, cfg) = setup("");
    let o = kdistill(&cfg, &dir.path().join("out"), &["distill"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kdistill generate"), "{}", stderr(&o));
}

#[test]
fn kde_changes_the_distilled_images() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    assert!(kdistill(&cfg, &out, &["distill", "--kde", "off"]).status.success());
    let o = kdistill(&cfg, &out, &["distill", "--kde", "on"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let off = fs::read(out.join("distill/dm/grid.png")).unwrap();
    let on = fs::read(out.join("distill/dm-kde/grid.png")).unwrap();
    assert_ne!(off, on);
    assert!(out.join("embed/table.emb").exists());
    assert!(out.join("distill/dm-kde/trace.csv").exists());
    let o = kdistill(&cfg, &out, &["eval", "--kde", "on"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("eval/dm-kde.jsonl").exists());
}

#[test]
fn zero_iterations_leave_the_initial_noise() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    assert!(kdistill(&cfg, &out, &["distill", "--iterations", "0"]).status.success());
    let got = SyntheticSet::load(&out.join("distill/dm/synthetic")).unwrap();
    let noise = SyntheticSet::noise([3, 16, 16], 10, 2, &mut ChaCha8Rng::seed_from_u64(5));
    // Synthetic sets are stored as f32.
    let want: Vec<f64> = noise.pixels().iter().map(|&p| p as f32 as f64).collect();
    assert_eq!(got.pixels(), &want[..]);
}

#[test]
fn convnet_surrogate_is_rejected_for_dsa() {
    let (dir, cfg) = setup("[distill.dsa]\nsurrogate = \"convnet\"\n");
    let out = dir.path().join("out");
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    let o = kdistill(&cfg, &out, &["distill", "--method", "dsa"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dense-relu-dense"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let (dir, cfg) = setup("[distill.extra]\nfoo = 1\n");
    let o = kdistill(&cfg, &dir.path().join("out"), &["generate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_cell_bench_writes_one_row() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    let o = kdistill(&cfg, &out, &["bench"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("bench/table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(out.join("bench/table.md").exists());
    assert_eq!(fs::read_to_string(out.join("bench/runs.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn inspect_describes_artifacts() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    assert!(kdistill(&cfg, &out, &["generate"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_kdistill")).arg("inspect").arg(out.join("dataset")).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("train_biased: 5000 samples, 4750 aligned, 250 conflicting"), "{text}");
}
