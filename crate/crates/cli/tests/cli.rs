use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn remix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = remix(args);
    assert!(
        out.status.success(),
        "remix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_toy(dir: &Path, seed: &str) -> String {
    ok(&["synth", "--out", s(dir), "--profile", "custom", "--seed", seed, "n_train=96", "n_val=24"])
}

/// A toy dataset plus a model trained on it for one epoch.
struct Trained {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    run: PathBuf,
}

fn trained() -> Trained {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_toy(&data, "3");
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--epochs", "1", "--batch-size", "8", "--lr", "1e-3",
        "base_channels=8", "disc_channels=8",
    ]);
    Trained { _tmp: tmp, data, run }
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth_toy(&tmp.path().join("a"), "5");
    let b = synth_toy(&tmp.path().join("b"), "5");
    let c = synth_toy(&tmp.path().join("c"), "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.trim().len(), 64);
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = remix(&["synth", "--out", s(&tmp.path().join("d")), "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));

    let data = tmp.path().join("data");
    synth_toy(&data, "1");
    let out = remix(&["train", "--data", s(&data), "--out", s(&tmp.path().join("r")), "bogus=3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = remix(&["train", "--data", s(&data), "--out", s(&tmp.path().join("r")), "--mode", "semi"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = remix(&["train", "--data", s(&tmp.path().join("nope")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn one_epoch_on_the_toy_set_is_quick() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    ok(&["synth", "--out", s(&data), "--profile", "custom"]);
    let start = Instant::now();
    ok(&["train", "--data", s(&data), "--out", s(&run), "--epochs", "1", "--batch-size", "8"]);
    let took = start.elapsed();
    assert!(took < Duration::from_secs(60), "took {took:?}");

    for f in ["config.txt", "metrics.jsonl", "state.rmxc", "masker.rmxc"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    // 500 mixtures make 250 pairs, so 32 batches of up to 8.
    assert_eq!(log.lines().count(), 32);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["step", "l_c", "l_m", "l_e", "l_d", "mean_mask"] {
        assert!(first.get(key).is_some(), "{key} not logged");
    }
}

#[test]
fn resume_continues_the_step_count() {
    let t = trained();
    let before = std::fs::read_to_string(t.run.join("metrics.jsonl")).unwrap().lines().count();
    let state = t.run.join("state.rmxc");
    ok(&[
        "train", "--data", s(&t.data), "--out", s(&t.run), "--epochs", "2", "--batch-size", "8", "--lr", "1e-3",
        "--checkpoint", s(&state), "base_channels=8", "disc_channels=8",
    ]);
    let log = std::fs::read_to_string(t.run.join("metrics.jsonl")).unwrap();
    let steps: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["step"].as_u64().unwrap())
        .collect();
    assert_eq!(steps.len(), 2 * before);
    assert!(steps.iter().enumerate().all(|(i, &s)| s == i as u64));
}

#[test]
fn eval_writes_both_reports() {
    let t = trained();
    let out = t.run.join("eval");
    let printed = ok(&["eval", "--checkpoint", s(&t.run.join("masker.rmxc")), "--data", s(&t.data), "--out", s(&out)]);
    let kv = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(printed, kv);
    assert!(kv.contains("psnr_mean = ") && kv.contains("n_examples = 24"));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("psnr_x,"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn eval_rejects_a_mismatched_dataset() {
    let t = trained();
    let other = t.run.join("big");
    ok(&["synth", "--out", s(&other), "--profile", "custom", "height=12", "width=12", "n_train=10", "n_val=4"]);
    let out = remix(&[
        "eval", "--checkpoint", s(&t.run.join("masker.rmxc")), "--data", s(&other), "--out", s(&t.run.join("e")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn grid_has_the_expected_layout_and_is_seeded() {
    let t = trained();
    let ckpt = t.run.join("masker.rmxc");
    let a = t.run.join("a.png");
    let b = t.run.join("b.png");
    let c = t.run.join("c.png");
    ok(&["grid", "--checkpoint", s(&ckpt), "--data", s(&t.data), "--out", s(&a)]);
    ok(&["grid", "--checkpoint", s(&ckpt), "--data", s(&t.data), "--out", s(&b)]);
    ok(&["grid", "--checkpoint", s(&ckpt), "--data", s(&t.data), "--out", s(&c), "--seed", "9", "--rows", "3"]);
    let img = image::open(&a).unwrap();
    assert_eq!((img.width(), img.height()), (5 * 8, 8 * 8));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let img = image::open(&c).unwrap();
    assert_eq!((img.width(), img.height()), (5 * 8, 3 * 8));
}

#[test]
fn separate_writes_three_images_per_input() {
    let t = trained();
    let input = t.run.join("mix.png");
    image::GrayImage::from_fn(8, 8, |x, y| image::Luma([if x == 2 || y == 5 { 128 } else { 0 }]))
        .save(&input)
        .unwrap();
    let out = t.run.join("sep");
    ok(&["separate", "--checkpoint", s(&t.run.join("masker.rmxc")), "--out", s(&out), s(&input)]);
    for suffix in ["x", "b", "mask"] {
        let img = image::open(out.join(format!("mix_{suffix}.png"))).unwrap();
        assert_eq!((img.width(), img.height()), (8, 8));
    }
}

#[test]
fn supervised_mode_trains() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_toy(&data, "2");
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--mode", "supervised", "--epochs", "1", "--batch-size", "8",
        "base_channels=8", "disc_channels=8",
    ]);
    assert!(run.join("masker.rmxc").exists());
    let cfg = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(cfg.contains("mode = supervised"));
}
