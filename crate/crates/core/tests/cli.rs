//! Drives the `a2a` binary end to end on tiny configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn a2a(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2a"))
        .args(args)
        .env("A2A_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = a2a(args);
    assert!(
        out.status.success(),
        "a2a {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, body: &Value) -> PathBuf {
    let path = dir.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn polar_config(out: &Path) -> Value {
    serde_json::json!({
        "seed": 3,
        "output_dir": out,
        "dataset": {"generator": {"kind": "polar_quadrant", "n_samples": 400, "seed": 1}},
        "model": {"hidden": [8, 8]},
        "train": {"batch_size": 32, "steps": 20, "log_every": 5, "checkpoint_every": 10,
                  "beta_policy": {"kind": "fixed", "value": 10.0}},
        "transport": {"method": "rk4", "n_steps": 10},
        "eval": {"n_eval": 16, "runs": 2, "marginal": {"c_src": 0.2, "c_targ": 1.2, "n": 50}}
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_wall_ms(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_ms");
    v
}

#[test]
fn pipeline_runs_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &polar_config(&out));
    let cfg = cfg.to_str().unwrap();

    ok(&["gen-data", "--config", cfg]);
    let dataset = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(dataset.starts_with("x0,x1,c0\n"));
    assert_eq!(dataset.lines().count(), 401);

    ok(&["train", "--config", cfg]);
    for name in ["step_00000010.json", "step_00000020.json", "final.json"] {
        assert!(out.join("checkpoints").join(name).exists(), "{name}");
    }
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,mean_loss,beta,wall_ms\n"));
    assert_eq!(log.lines().count(), 5);
    let final_ckpt = read_json(&out.join("checkpoints/final.json"));
    assert_eq!(final_ckpt["step"], 20);
    assert_eq!(final_ckpt["seed"], 3);

    ok(&["eval", "--config", cfg]);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["runs"], 2);
    assert!(report["mean"].as_f64().unwrap().is_finite());
    assert!(report["marginal"]["ks_statistic"].as_f64().unwrap() <= 1.0);

    // second run overwrites with identical artifacts
    let first_ckpt = fs::read(out.join("checkpoints/final.json")).unwrap();
    ok(&["train", "--config", cfg]);
    assert_eq!(
        fs::read(out.join("checkpoints/final.json")).unwrap(),
        first_ckpt
    );
    ok(&["eval", "--config", cfg]);
    assert_eq!(
        without_wall_ms(read_json(&out.join("report.json"))),
        without_wall_ms(report)
    );
}

#[test]
fn zero_beta_coupling_equals_plain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &polar_config(&dir.path().join("run")));
    let cfg = cfg.to_str().unwrap();
    let a2a_out = dir.path().join("a2a.csv");
    let plain_out = dir.path().join("plain.csv");
    let common = ["--config", cfg, "--beta", "0", "--batch-size", "64"];
    ok(&[
        &["couple"],
        &common[..],
        &["--mode", "a2a", "--out", a2a_out.to_str().unwrap()],
    ]
    .concat());
    ok(&[
        &["couple"],
        &common[..],
        &["--mode", "plain", "--out", plain_out.to_str().unwrap()],
    ]
    .concat());
    // the condition column still reports the unweighted a2a term
    let columns = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(columns(&a2a_out), columns(&plain_out));
    let side = read_json(&a2a_out.with_extension("json"));
    assert_eq!(side["N"], 64);
    assert_eq!(side["beta"], 0.0);
    let text = fs::read_to_string(&a2a_out).unwrap();
    assert!(text.starts_with("i,pi_i,transport_cost_i,condition_cost_i\n"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn antisymmetric_transfer_to_same_condition_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &polar_config(&out));
    let cfg = cfg.to_str().unwrap();
    let set = [
        "--set",
        "model.mode=antisymmetric",
        "--set",
        "train.steps=5",
    ];
    ok(&[&["train", "--config", cfg], &set[..]].concat());

    let input = dir.path().join("points.csv");
    fs::write(
        &input,
        "x0,x1,c0,c_targ0\n1.5,0.2,0.3,0.3\n-0.25,1.125,1.0,1.0\n",
    )
    .unwrap();
    let before = fs::read(&input).unwrap();
    let moved = dir.path().join("moved.csv");
    ok(&[
        &[
            "transfer",
            "--config",
            cfg,
            "--input",
            input.to_str().unwrap(),
            "--out",
            moved.to_str().unwrap(),
        ],
        &set[..],
    ]
    .concat());
    assert_eq!(fs::read(&input).unwrap(), before, "input must not change");

    let text = fs::read_to_string(&moved).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x_src0,x_src1,c_src0,c_targ0,x_out0,x_out1"
    );
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(&v[0..2], &v[4..6]);
    }
}

#[test]
fn curve_reports_auc() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("metrics.csv");
    fs::write(
        &input,
        "similarity,error\n0.1,0.0\n0.2,0.5\n0.3,0.25\n0.4,0.75\n",
    )
    .unwrap();
    let out = dir.path().join("curve/curve.csv");
    ok(&[
        "curve",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(read_json(&out.with_extension("json"))["auc"], 0.375);
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("threshold,x,y\n"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    let mut bad = polar_config(&out);
    bad["train"]["stepz"] = 3.into();
    let cfg = write_config(dir.path(), &bad);
    let res = a2a(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("stepz"));

    let mut csv_cfg = polar_config(&out);
    csv_cfg["dataset"] = serde_json::json!({"csv": dir.path().join("missing.csv")});
    let cfg = write_config(dir.path(), &csv_cfg);
    assert_eq!(
        a2a(&["gen-data", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    assert_eq!(a2a(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(a2a(&["--help"]).status.code(), Some(0));
}
