//! End-to-end checks of the command-line driver: outputs land where they
//! should, reruns are deterministic, and the exit codes follow the
//! documented contract (2 for configuration errors).

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cs4ml"))
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cs4ml_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn polyreg_writes_stats_and_is_deterministic() {
    let dir = tmp_dir("polyreg");
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"orders": [1, 2], "trials": 2, "grid_points": 400}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        let status = bin()
            .args(["polyreg", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(dir.join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("a/stats.csv")).unwrap();
    let b = std::fs::read(dir.join("b/stats.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "reruns must be byte-identical");
    assert!(dir.join("a/trace.json").exists());
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"orders": [3, 3]}"#).unwrap();
    let status = bin()
        .args(["polyreg", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // Unknown fields are config errors too.
    std::fs::write(&cfg, r#"{"no_such_knob": 1}"#).unwrap();
    let status = bin()
        .args(["scaling", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // Experiment kind in the file must match the subcommand.
    std::fs::write(&cfg, r#"{"experiment": "cas"}"#).unwrap();
    let status = bin()
        .args(["props", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn props_runs_with_defaults_and_seed_flag() {
    let dir = tmp_dir("props");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"prop_instances": 6}"#).unwrap();
    let status = bin()
        .args(["props", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--out"])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.join("out/props.csv")).unwrap();
    assert!(text.starts_with("property,instances,violations"));
    assert!(text.lines().count() > 4);
}

#[test]
fn fourier_writes_surrogate_and_sidecar() {
    let dir = tmp_dir("fourier");
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"image_side": 8, "image_dim": 1, "latent_dim": 3,
            "surrogate_iterations": 10, "sample_counts": [4],
            "fourier_trials": 2, "noise": 0.1}"#,
    )
    .unwrap();
    let out = dir.join("out");
    let status = bin()
        .args(["fourier", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "fourier.csv",
        "ktilde.csv",
        "ktilde_convergence.csv",
        "example_truth.f64",
        "example_estimate.f64",
        "example_meta.json",
        "trace.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    // The binary image has 8 little-endian f64 values.
    let raw = std::fs::read(out.join("example_truth.f64")).unwrap();
    assert_eq!(raw.len(), 8 * 8);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("example_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["shape"], serde_json::json!([8]));
    assert!(meta["psnr"].as_f64().is_some());
}

#[test]
fn plot_flag_emits_svg() {
    let dir = tmp_dir("plots");
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"orders": [1, 2], "trials": 2, "grid_points": 300}"#,
    )
    .unwrap();
    let out = dir.join("out");
    let status = bin()
        .args(["polyreg", "--config"])
        .arg(&cfg)
        .args(["--plot", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(out.join("plot_error.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(Path::new(&out).join("plot_cond.svg").exists());
}
