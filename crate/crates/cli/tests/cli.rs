//! Binary-level tests: exit codes, help output, the prep fixture matrix,
//! and cross-run output determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lambda-prior"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
seed = 7

[world]
io_dim = 32
seed = 1

[prior]
n_layers = 1
n_heads = 2
head_dim = 8
io_dim = 32
max_seq = 16
mlp_ratio = 2

[train]
batch_size = 8
total_steps = 6
warmup_steps = 1
peak_lr = 1e-3
checkpoint_every = 3

[data]
train_samples = 48
eval_samples = 64
pool = 8
"#,
    )
    .unwrap();
    path
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["--config", "--seed", "--out", "--float64", "synth", "prep", "train", "eval", "ablate", "interp", "gradcheck", "params"] {
        assert!(text.contains(needle), "--help missing {needle}");
    }
    let train_help = run(&["train", "--help"]);
    let text = String::from_utf8_lossy(&train_help.stdout);
    for needle in ["--steps", "--batch", "--lambda", "--tau", "--resume"] {
        assert!(text.contains(needle), "train --help missing {needle}");
    }
}

#[test]
fn unknown_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nbananas = true\n").unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "params"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bananas"), "stderr must name the key: {err}");
}

#[test]
fn missing_records_file_exits_3() {
    let out = run(&["prep", "--records", "/nonexistent/records.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn params_prints_the_paper_scale_count() {
    let out = run(&["params"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let count: u64 = text
        .lines()
        .find_map(|l| l.strip_prefix("parameter count: "))
        .expect("count line")
        .parse()
        .unwrap();
    assert!((32_000_000..=36_000_000).contains(&count), "{count}");
}

#[test]
fn prep_reports_each_rejection_rule_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    // One record per image-level rejection rule, a few per-subject ones, and
    // one clean keeper.
    let pass = serde_json::json!({
        "image_id": "keep", "width": 1024, "height": 1024,
        "caption_tokens": ["a", "dog"],
        "subject_spans": [{"label": "dog", "token_start": 1, "token_end": 2}],
        "boxes": [{"x0": 0.0, "y0": 0.0, "x1": 400.0, "y1": 200.0, "logit": 0.9}],
        "mask_area_px": [50000.0], "mask_bg_fraction": [0.02],
        "identical_object_count": 1
    });
    let mut records = vec![pass.clone()];
    let mutate = |id: &str, f: &dyn Fn(&mut serde_json::Value)| {
        let mut r = pass.clone();
        r["image_id"] = id.into();
        f(&mut r);
        r
    };
    records.push(mutate("small", &|r| r["width"] = 640.into()));
    records.push(mutate("no_boxes", &|r| {
        r["caption_tokens"] = serde_json::json!(["scene"]);
        r["subject_spans"] = serde_json::json!([]);
        r["boxes"] = serde_json::json!([]);
        r["mask_area_px"] = serde_json::json!([]);
        r["mask_bg_fraction"] = serde_json::json!([]);
    }));
    records.push(mutate("copies", &|r| r["identical_object_count"] = 9.into()));
    records.push(mutate("thin", &|r| r["boxes"][0]["y1"] = 15.0.into()));
    records.push(mutate("faint", &|r| r["boxes"][0]["logit"] = 0.1.into()));
    records.push(mutate("hollow", &|r| r["mask_area_px"][0] = 1000.0.into()));
    records.push(mutate("washed", &|r| r["mask_bg_fraction"][0] = 0.5.into()));
    records.push(mutate("crowd", &|r| {
        r["caption_tokens"] = serde_json::json!(["a","b","c","d","e","f","g","h","i","j"]);
        r["subject_spans"] = serde_json::json!([
            {"label": "s0", "token_start": 0, "token_end": 1},
            {"label": "s1", "token_start": 2, "token_end": 3},
            {"label": "s2", "token_start": 4, "token_end": 5},
            {"label": "s3", "token_start": 6, "token_end": 7},
            {"label": "s4", "token_start": 8, "token_end": 9}
        ]);
        let b = serde_json::json!({"x0": 0.0, "y0": 0.0, "x1": 400.0, "y1": 200.0, "logit": 0.9});
        r["boxes"] = serde_json::json!([b, b, b, b, b]);
        r["mask_area_px"] = serde_json::json!([50000.0, 50000.0, 50000.0, 50000.0, 50000.0]);
        r["mask_bg_fraction"] = serde_json::json!([0.02, 0.02, 0.02, 0.02, 0.02]);
    }));
    let jsonl: String =
        records.iter().map(|r| format!("{r}\n")).collect();
    let records_path = dir.path().join("records.jsonl");
    std::fs::write(&records_path, jsonl).unwrap();

    let out_dir = dir.path().join("out");
    let out = run(&[
        "--out",
        out_dir.to_str().unwrap(),
        "prep",
        "--records",
        records_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("rejections.json")).unwrap())
            .unwrap();
    assert_eq!(report["accepted"], 1);
    assert_eq!(report["rejected"], 8);
    let by_rule = report["by_rule"].as_object().unwrap();
    for rule in [
        "min_resolution",
        "box_count_range",
        "max_identical",
        "ratio_range",
        "min_logit",
        "min_mask_box_fraction",
        "max_bg_fraction",
        "subjects_per_image_range",
    ] {
        assert_eq!(by_rule[rule], 1, "rule {rule} should fire exactly once: {by_rule:?}");
    }
}

#[test]
fn prep_on_empty_input_gives_empty_manifest_and_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("empty.jsonl");
    std::fs::write(&records, "").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--out",
        out_dir.to_str().unwrap(),
        "prep",
        "--records",
        records.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let manifest = std::fs::read_to_string(out_dir.join("prep.manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["header"]["record_count"], 0);
}

#[test]
fn synth_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    for sub in ["a", "b"] {
        let out = run(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join(sub).to_str().unwrap(),
            "synth",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["world.json", "train.manifest.json", "train.manifest.cache.bin", "eval.manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across reruns");
    }
}

#[test]
fn train_missing_dataset_exits_2_and_corrupt_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("nodata").to_str().unwrap(),
        "train",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let ckpt = dir.path().join("garbage.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint at all").unwrap();
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("nodata").to_str().unwrap(),
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn end_to_end_train_eval_interp_on_tiny_world() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let cfg = config.to_str().unwrap();
    let out_s = out_dir.to_str().unwrap();

    assert!(run(&["--config", cfg, "--out", out_s, "synth"]).status.success());
    let train_out = run(&["--config", cfg, "--out", out_s, "train"]);
    assert!(train_out.status.success(), "{}", String::from_utf8_lossy(&train_out.stderr));
    let ckpt = out_dir.join("checkpoint_final.ckpt");

    let eval_out = run(&["--config", cfg, "--out", out_s, "eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(eval_out.status.success(), "{}", String::from_utf8_lossy(&eval_out.stderr));
    assert!(out_dir.join("eval_report.csv").exists());
    assert!(out_dir.join("eval_report.json").exists());

    let interp_out = run(&[
        "--config", cfg, "--out", out_s,
        "interp", "--checkpoint", ckpt.to_str().unwrap(), "--rows", "3", "--cols", "5",
    ]);
    assert!(interp_out.status.success(), "{}", String::from_utf8_lossy(&interp_out.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("interp_grid.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["rows"], 3);
    assert_eq!(sidecar["cols"], 5);
    let smoothness = sidecar["interp_smoothness"].as_f64().unwrap();
    assert!(smoothness.is_finite());

    // Identical corners degenerate to a constant grid.
    let const_cfg = dir.path().join("const.toml");
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.push_str(
        r#"
[interp]
rows = 3
cols = 3
corners = [
  { template = 0, subjects = ["dog"] },
  { template = 0, subjects = ["dog"] },
  { template = 0, subjects = ["dog"] },
  { template = 0, subjects = ["dog"] },
]
"#,
    );
    std::fs::write(&const_cfg, text).unwrap();
    let out2 = run(&[
        "--config", const_cfg.to_str().unwrap(), "--out", out_s,
        "interp", "--checkpoint", ckpt.to_str().unwrap(),
    ]);
    assert!(out2.status.success(), "{}", String::from_utf8_lossy(&out2.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("interp_grid.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["interp_smoothness"].as_f64().unwrap(), 0.0);
}

#[test]
fn gradcheck_passes_and_exits_zero() {
    let out = run(&["--seed", "11", "gradcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}
