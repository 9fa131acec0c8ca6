//! End-to-end exercise of every subcommand on a micro configuration.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_trajmia")
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .env_remove("TRAJMIA_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &std::process::Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn micro_config(dir: &Path) -> PathBuf {
    let path = dir.join("micro.toml");
    std::fs::write(
        &path,
        r#"
[experiment]
t_max = [6]
modes = ["individual"]
m = 3
collective_passes = 2
members = 40
nonmembers = 40
seeds = [1]
out_dir = "unused"
collect_noise = 0.4

[oracle]
steps = 150
warmup = 50
hidden = 24

[trainer]
gradient_steps = 80
hidden = 24
eval_interval = 40
eval_episodes = 2

[classifier.tcn]
levels = 3
channels = 8
dropout = 0.1

[classifier.resnet]
stages = 1
blocks_per_stage = 1
base_channels = 4

[classifier.train]
epochs = 2
"#,
    )
    .unwrap();
    path
}

#[test]
fn stage_commands_compose_into_the_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let out = run(&["collect", "--config", cfg, "--role", "shadow", "--seed", "1", "--out-dir", &d("shadow")]);
    assert_ok(&out, "collect shadow");
    assert!(dir.path().join("shadow/member.jsonl").exists());
    assert!(dir.path().join("shadow/nonmember.jsonl").exists());
    assert!(dir.path().join("shadow/behavior.json").exists());

    let out = run(&[
        "train-rl",
        "--config", cfg,
        "--batch", &d("shadow/member.jsonl"),
        "--seed", "1",
        "--out", &d("model.json"),
        "--curve", &d("curve.csv"),
    ]);
    assert_ok(&out, "train-rl");
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("step,mean_return,stderr\n"), "{curve}");

    let out = run(&[
        "build-dataset",
        "--config", cfg,
        "--member", &d("shadow/member.jsonl"),
        "--nonmember", &d("shadow/nonmember.jsonl"),
        "--model", &d("model.json"),
        "--out-dir", &d("dataset"),
        "--seed", "1",
    ]);
    assert_ok(&out, "build-dataset");
    assert!(dir.path().join("dataset/manifest.json").exists());
    assert!(dir.path().join("dataset/samples.bin").exists());

    let out = run(&[
        "train-attack",
        "--config", cfg,
        "--dataset", &d("dataset"),
        "--seed", "1",
        "--out", &d("clf.json"),
    ]);
    assert_ok(&out, "train-attack");

    let out = run(&[
        "evaluate",
        "--classifier", &d("clf.json"),
        "--dataset", &d("dataset"),
        "--out-dir", &d("eval"),
        "--t-max", "6",
        "--seed", "1",
    ]);
    assert_ok(&out, "evaluate");
    let metrics = std::fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert!(metrics.starts_with("env,mode,t_max,clip_len,m,theta,seed,acc,pr,re,f1,mcc\n"));
    assert_eq!(metrics.lines().count(), 10, "header plus nine thresholds");
    let roc = std::fs::read_to_string(dir.path().join("eval/roc.csv")).unwrap();
    assert!(roc.starts_with("theta,fpr,recall\n"));
    let thetas: Vec<f64> = roc
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(thetas.windows(2).all(|w| w[0] < w[1]), "roc rows sorted by theta");

    // the decorrelated variant also builds
    let out = run(&[
        "build-dataset",
        "--config", cfg,
        "--member", &d("shadow/member.jsonl"),
        "--nonmember", &d("shadow/nonmember.jsonl"),
        "--model", &d("model.json"),
        "--out-dir", &d("dataset_decor"),
        "--decorrelate",
        "--seed", "1",
    ]);
    assert_ok(&out, "build-dataset --decorrelate");
}

#[test]
fn sweep_writes_a_full_report_and_report_regenerates_it_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path());
    let out_dir = dir.path().join("run");

    let out = run(&[
        "sweep",
        "--config", cfg.to_str().unwrap(),
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "sweep");
    for artifact in ["run_report.json", "metrics.csv", "metrics_agg.csv", "summary.json"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }
    let roc_files: Vec<_> = std::fs::read_dir(out_dir.join("roc")).unwrap().collect();
    assert_eq!(roc_files.len(), 1);
    let curve_files: Vec<_> = std::fs::read_dir(out_dir.join("learning_curves")).unwrap().collect();
    assert_eq!(curve_files.len(), 2, "shadow and private curves");

    // regenerating from the persisted report is byte-identical
    let regen = dir.path().join("regen");
    let out = run(&[
        "report",
        "--run", out_dir.join("run_report.json").to_str().unwrap(),
        "--out-dir", regen.to_str().unwrap(),
    ]);
    assert_ok(&out, "report");
    for artifact in ["metrics.csv", "metrics_agg.csv", "summary.json"] {
        let a = std::fs::read(out_dir.join(artifact)).unwrap();
        let b = std::fs::read(regen.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} must regenerate byte-identically");
    }
}

#[test]
fn out_root_variable_prefixes_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path());
    let out = Command::new(bin())
        .args(["collect", "--config", cfg.to_str().unwrap(), "--out-dir", "nested/collect"])
        .env("TRAJMIA_OUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert_ok(&out, "collect under TRAJMIA_OUT_ROOT");
    assert!(dir.path().join("nested/collect/member.jsonl").exists());
}

#[test]
fn served_environment_matches_the_local_one_through_the_adapter() {
    let mut command = Command::new(bin());
    command.args(["serve-env", "--env", "point-reach-2d", "--t-max", "8"]);
    let mut client = trajmia_core::env::ExternalEnvClient::<f32>::from_command(&mut command).unwrap();

    let policy = trajmia_core::policy::ConstantPolicy::new(vec![0.25f32, -0.5]);
    let mut local = trajmia_core::env::PointReach2D::<f32>::new(8);
    for seed in [0u64, 7, 42] {
        let remote = trajmia_core::rollout(&mut client, &policy, seed, 0.2).unwrap();
        let here = trajmia_core::rollout(&mut local, &policy, seed, 0.2).unwrap();
        assert_eq!(remote, here, "adapter must reproduce local dynamics bit-exactly");
    }
}
