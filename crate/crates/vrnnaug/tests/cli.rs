use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vrnnaug"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn generate(dir: &Path, segments: &[&str]) -> PathBuf {
    let out = dir.join("data.csv");
    let mut args = vec!["generate", "--out", p(&out), "--seed", "1"];
    for s in segments {
        args.extend(["--segment", s]);
    }
    ok(&args);
    out
}

/// A tiny run configuration so the pipeline finishes in seconds.
fn small_config(dir: &Path, data: &Path, run: &str, epochs: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "data": {
            "source": {"kind": "csv", "path": data, "u_columns": ["u"], "y_columns": ["y"]},
            "split_lengths": [200, 60]
        },
        "window": 16,
        "model": {"d_z": 2, "gru_hidden": 8, "forecast_samples": 20},
        "train": {"batch_size": 32, "schedule": {"max_epochs": epochs, "initial_lr": 0.005}},
        "seed": 3,
        "output_dir": dir.join(run),
    });
    let path = dir.join(format!("{run}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn generate_writes_reproducible_files() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    ok(&["generate", "--out", p(&a), "--len", "2000", "--seed", "1"]);
    ok(&["generate", "--out", p(&b), "--len", "2000", "--seed", "1"]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 2001);
    assert!(text.starts_with("u,y\n"));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let prov = json(&tmp.path().join("a.json"));
    assert_eq!(prov["seed"], 1);
    assert_eq!(prov["rows"], 2000);
    assert_eq!(prov["system"]["a"], serde_json::json!([[0.7, 0.8], [0.0, 0.1]]));
    assert_eq!(prov["system"]["process_var"], 0.5);

    let seg = generate(tmp.path(), &["30:excitation", "20:sinusoid"]);
    assert_eq!(std::fs::read_to_string(seg).unwrap().lines().count(), 51);

    let out = run(&["generate", "--out", p(&a), "--len", "0"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(code(&run(&["generate", "--out", p(&a), "--segment", "10:square"])), 2);
}

#[test]
fn full_pipeline_composes() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), &["300:excitation", "40:sinusoid"]);
    let cfg = small_config(tmp.path(), &data, "run", 2);
    let out = ok(&["train", "--config", p(&cfg), "--quiet"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("p50"));
    let dir = tmp.path().join("run");
    for f in [
        "config.json",
        "checkpoint.json",
        "state.json",
        "report.json",
        "losses.csv",
        "test.csv",
        "forecast.json",
        "quantiles.csv",
        "metrics.json",
        "ecp.csv",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    // the snapshot is fully resolved
    let snap = json(&dir.join("config.json"));
    assert_eq!(snap["model"]["d_u"], 1);
    assert_eq!(snap["train"]["seed"], 3);
    assert_eq!(snap["model"]["mlp_hidden_layers"], 3);
    let report = json(&dir.join("report.json"));
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);
    assert_eq!(report["termination"], "max_epochs");

    let fc = json(&dir.join("forecast.json"));
    assert_eq!(fc["samples"].as_array().unwrap().len(), 20);
    assert_eq!(fc["samples"][0].as_array().unwrap().len(), 80);
    let q = std::fs::read_to_string(dir.join("quantiles.csv")).unwrap();
    assert!(q.starts_with("t,y_q05,y_q50,y_q95,y_mean\n"));
    assert_eq!(q.lines().count(), 81);

    // scoring the persisted files reproduces the training-time report
    let again = tmp.path().join("again");
    ok(&[
        "evaluate",
        "--forecast",
        p(&dir.join("forecast.json")),
        "--truth",
        p(&dir.join("test.csv")),
        "--out",
        p(&again),
    ]);
    assert_eq!(
        std::fs::read(dir.join("metrics.json")).unwrap(),
        std::fs::read(again.join("metrics.json")).unwrap()
    );
    let ecp = std::fs::read_to_string(again.join("ecp.csv")).unwrap();
    assert!(ecp.starts_with("alpha,coverage\n"));
    assert_eq!(ecp.lines().count(), 20);

    // forecast from the checkpoint with known future inputs
    let fdir = tmp.path().join("fc");
    let (ck, test) = (dir.join("checkpoint.json"), dir.join("test.csv"));
    let args = [
        "forecast",
        "--checkpoint",
        p(&ck),
        "--inputs",
        p(&test),
        "--horizon",
        "10",
        "--samples",
        "100",
        "--seed",
        "5",
        "--out",
        p(&fdir),
    ];
    ok(&args);
    let fc = json(&fdir.join("forecast.json"));
    let s = fc["samples"].as_array().unwrap();
    assert_eq!(s.len(), 100);
    assert!(s.iter().all(|t| t.as_array().unwrap().len() == 10));
    assert!(s.iter().all(|t| t[0].as_array().unwrap().len() == 1));
    let first = std::fs::read(fdir.join("forecast.json")).unwrap();
    ok(&args);
    assert_eq!(first, std::fs::read(fdir.join("forecast.json")).unwrap());

    // warm start from history
    let wdir = tmp.path().join("warm");
    ok(&[
        "forecast",
        "--checkpoint",
        p(&dir.join("checkpoint.json")),
        "--inputs",
        p(&dir.join("test.csv")),
        "--history",
        p(&data),
        "--out",
        p(&wdir),
    ]);
    assert_eq!(json(&wdir.join("forecast.json"))["warmup"], 340);

    let short = run(&[
        "forecast",
        "--checkpoint",
        p(&dir.join("checkpoint.json")),
        "--inputs",
        p(&dir.join("test.csv")),
        "--horizon",
        "500",
        "--out",
        p(&fdir),
    ]);
    assert_eq!(code(&short), 3);
    assert!(stderr(&short).contains("420 short"), "{}", stderr(&short));
}

#[test]
fn training_is_deterministic_and_resumable() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), &["300:excitation", "40:sinusoid"]);
    let a = small_config(tmp.path(), &data, "a", 3);
    let b = small_config(tmp.path(), &data, "b", 3);
    ok(&["train", "--config", p(&a), "--quiet"]);
    ok(&["train", "--config", p(&b), "--quiet"]);
    let losses = |run: &str| std::fs::read(tmp.path().join(run).join("losses.csv")).unwrap();
    assert_eq!(losses("a"), losses("b"));
    let trace = |run: &str| {
        let r = json(&tmp.path().join(run).join("report.json"));
        r["epochs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| (e["train_loss"].as_f64().unwrap(), e["valid_loss"].as_f64().unwrap()))
            .collect::<Vec<_>>()
    };
    assert_eq!(trace("a"), trace("b"));
    let ckpt = |run: &str| std::fs::read(tmp.path().join(run).join("checkpoint.json")).unwrap();
    assert_eq!(ckpt("a"), ckpt("b"));

    let c = small_config(tmp.path(), &data, "c", 2);
    ok(&["train", "--config", p(&c), "--quiet"]);
    let dir = tmp.path().join("c");
    ok(&["train", "--resume", "--out", p(&dir), "--max-epochs", "3", "--quiet"]);
    let text = String::from_utf8(losses("c")).unwrap();
    let epochs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3"]);
    assert_eq!(losses("c"), losses("a"));
    assert_eq!(ckpt("c"), ckpt("a"));
}

#[test]
fn checkpoint_json_round_trips_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), &["300:excitation"]);
    let cfg = small_config(tmp.path(), &data, "run", 1);
    ok(&["train", "--config", p(&cfg), "--quiet"]);
    let path = tmp.path().join("run/checkpoint.json");
    let bytes = std::fs::read(&path).unwrap();
    let ck = vrnnaug::artifacts::Checkpoint::load(&path).unwrap();
    let again = tmp.path().join("again.json");
    vrnnaug::artifacts::write_json(&again, &ck).unwrap();
    assert_eq!(bytes, std::fs::read(&again).unwrap());
    let state: vrnnaug_core::train::TrainState =
        vrnnaug::artifacts::read_json(&tmp.path().join("run/state.json")).unwrap();
    assert_eq!(state.epochs_done(), 1);
    assert!(tmp.path().join("run/metrics.json").exists());
}

#[test]
fn argument_errors_stop_before_compute() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), &["100:excitation"]);
    let run_dir = tmp.path().join("bad");
    let out = run(&[
        "train",
        "--data",
        p(&data),
        "--u-columns",
        "u",
        "--y-columns",
        "y",
        "--split",
        "0.5,0.5,0.5",
        "--out",
        p(&run_dir),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("split fractions"));
    assert!(!run_dir.exists());

    assert_eq!(code(&run(&["train", "--out", p(&run_dir)])), 2);
    assert_eq!(code(&run(&["train", "--resume"])), 2);
    assert_eq!(code(&run(&["train", "--variant", "v9"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "u,y\n1,2\n3,\n4,5\n").unwrap();
    let out = run(&["train", "--data", p(&bad), "--u-columns", "u", "--y-columns", "y", "--quiet"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let data = generate(tmp.path(), &["100:excitation"]);
    let out = run(&["train", "--data", p(&data), "--u-columns", "u", "--y-columns", "nope"]);
    assert_eq!(code(&out), 3);
    // too short for two 64-row segments
    let out = run(&["train", "--data", p(&data), "--u-columns", "u", "--y-columns", "y"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let missing = tmp.path().join("missing.csv");
    let out = run(&["train", "--data", p(&missing), "--u-columns", "u", "--y-columns", "y"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn numeric_blowup_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), &["300:excitation"]);
    let cfg = small_config(tmp.path(), &data, "run", 3);
    let out = run(&["train", "--config", p(&cfg), "--lr", "1e300", "--quiet"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

fn write_forecast(path: &Path, names: &[&str], samples: Value) {
    let v = serde_json::json!({"y_names": names, "seed": 0, "warmup": 0, "samples": samples});
    std::fs::write(path, v.to_string()).unwrap();
}

#[test]
fn evaluate_scores_known_forecasts() {
    let tmp = TempDir::new().unwrap();
    let truth = tmp.path().join("truth.csv");
    std::fs::write(&truth, "u,y1,y2\n0,1.5,-2\n0,2,4\n0,-1,3\n").unwrap();
    let rows = serde_json::json!([[1.5, -2.0], [2.0, 4.0], [-1.0, 3.0]]);
    let perfect: Vec<Value> = (0..100).map(|_| rows.clone()).collect();
    let fc = tmp.path().join("fc.json");
    write_forecast(&fc, &["y1", "y2"], Value::Array(perfect));
    let out = ok(&["evaluate", "--forecast", p(&fc), "--truth", p(&truth), "--per-dim-ecp"]);
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("y1") && text.contains("y2"), "{text}");
    let m = json(&tmp.path().join("metrics.json"));
    let dims = m["dims"].as_array().unwrap();
    assert_eq!(dims.len(), 2);
    for d in dims {
        for l in d["quantile_losses"].as_array().unwrap() {
            assert_eq!(l["loss"], 0.0);
        }
    }
    let ecp = std::fs::read_to_string(tmp.path().join("ecp.csv")).unwrap();
    assert!(ecp.starts_with("alpha,coverage,coverage_y1,coverage_y2\n"));

    // two samples straddling the truth: quantiles interpolate exactly
    let lo = serde_json::json!([[0.5, -3.0], [1.0, 3.0], [-2.0, 2.0]]);
    let hi = serde_json::json!([[2.5, -1.0], [3.0, 5.0], [0.0, 4.0]]);
    write_forecast(&fc, &["y1", "y2"], serde_json::json!([lo, hi]));
    ok(&["evaluate", "--forecast", p(&fc), "--truth", p(&truth)]);
    let m = json(&tmp.path().join("metrics.json"));
    // medians equal the truth
    assert_eq!(m["dims"][0]["quantile_losses"][0]["loss"], 0.0);
    // q90 of y1 sits 0.8 above the truth at every step: 2·Σ 0.1·0.8 / Σ|y|
    let want = 2.0 * 3.0 * 0.1 * 0.8 / 4.5;
    let got = m["dims"][0]["quantile_losses"][1]["loss"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");

    let short = tmp.path().join("short.csv");
    std::fs::write(&short, "y1,y2\n1,2\n").unwrap();
    let out = run(&["evaluate", "--forecast", p(&fc), "--truth", p(&short)]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("covers 3 steps"));
}

#[test]
fn trains_on_two_output_data() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("tank.csv");
    let mut text = String::from("u,y1,y2\n");
    for t in 0..300 {
        let x = t as f64 * 0.1;
        text.push_str(&format!("{},{},{}\n", x.sin(), (0.7 * x).cos() + 2.0, (0.3 * x).sin() + 1.5));
    }
    std::fs::write(&path, text).unwrap();
    let run_dir = tmp.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&path),
        "--u-columns",
        "u",
        "--y-columns",
        "y1,y2",
        "--window",
        "16",
        "--d-z",
        "2",
        "--gru-hidden",
        "8",
        "--samples",
        "10",
        "--max-epochs",
        "1",
        "--out",
        p(&run_dir),
        "--quiet",
    ]);
    let m = json(&run_dir.join("metrics.json"));
    assert_eq!(m["y_names"], serde_json::json!(["y1", "y2"]));
    assert_eq!(m["dims"].as_array().unwrap().len(), 2);
    let cfg = json(&run_dir.join("config.json"));
    assert_eq!(cfg["model"]["d_y"], 2);
}

#[test]
fn motorcycle_source() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("mcycle.csv");
    let mut text = String::from("times,accel\n");
    for i in 0..133 {
        // repeated time stamps are legal
        let t = 2.4 + (i / 2) as f64 * 0.4;
        text.push_str(&format!("{t},{}\n", (t * 0.3).sin() * 50.0));
    }
    std::fs::write(&path, text).unwrap();
    let s = vrnnaug::csvio::load_motorcycle(&path).unwrap();
    assert_eq!(s.len(), 133);
    let run_dir = tmp.path().join("run");
    ok(&[
        "train",
        "--motorcycle",
        p(&path),
        "--window",
        "20",
        "--split",
        "0.4,0.3,0.3",
        "--d-z",
        "2",
        "--gru-hidden",
        "8",
        "--samples",
        "10",
        "--max-epochs",
        "1",
        "--out",
        p(&run_dir),
        "--quiet",
    ]);
    assert!(run_dir.join("metrics.json").exists());
}
