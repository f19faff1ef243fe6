use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcmr")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pcmr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn hash_line(stdout: &str) -> String {
    stdout.lines().find(|l| l.starts_with("manifest sha256")).unwrap().to_string()
}

fn gen_small(dir: &Path, seed: &str) -> String {
    ok(&["gen", "--out", dir.to_str().unwrap(), "--pairs", "12", "--points", "500", "--seed", seed])
}

fn train_small(data: &Path, out: &Path) {
    ok(&[
        "train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--epochs", "2", "--anchors", "4", "--cap", "16",
    ]);
}

#[test]
fn gen_is_deterministic_and_replayable_from_its_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let ha = hash_line(&gen_small(&a, "5"));
    let hb = hash_line(&gen_small(&b, "5"));
    assert_eq!(ha, hb);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());

    let echo = a.join("config_echo.txt");
    let hc = hash_line(&ok(&["gen", "--config", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]));
    assert_eq!(ha, hc);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert_eq!(pcmr(&["gen", "--out", d.to_str().unwrap(), "--pairs", "0"]).status.code(), Some(2));
    assert_eq!(pcmr(&["gen", "--bogus-flag"]).status.code(), Some(2));
    let cfg = tmp.path().join("bad.txt");
    fs::write(&cfg, "not_a_key=1\n").unwrap();
    let out = pcmr(&["gen", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data, "1");
    let out = pcmr(&[
        "eval", "--data", data.to_str().unwrap(), "--checkpoint", tmp.path().join("nope.json").to_str().unwrap(),
        "--out", tmp.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = pcmr(&["train", "--data", tmp.path().join("absent").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_predictor_scores_perfectly_and_model_eval_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    gen_small(&data, "2");
    train_small(&data, &run);
    assert!(run.join("checkpoint.json").exists());
    assert!(fs::read_to_string(run.join("history.csv")).unwrap().lines().count() >= 2);

    let e = tmp.path().join("eval");
    ok(&["eval", "--data", data.to_str().unwrap(), "--predictor", "oracle", "--split", "train", "--out", e.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(e.join("eval_train.json")).unwrap()).unwrap();
    assert_eq!(report["rmse"].as_f64(), Some(0.0));
    assert_eq!(report["r_squared"].as_f64(), Some(1.0));

    let m = tmp.path().join("model_eval");
    ok(&[
        "eval", "--data", data.to_str().unwrap(), "--checkpoint", run.join("checkpoint.json").to_str().unwrap(),
        "--out", m.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(m.join("predictions_test.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("label,prediction"));
}

#[test]
fn features_dump_has_one_row_per_anchor_and_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data, "3");
    let out = tmp.path().join("f");
    ok(&["features", "--data", data.to_str().unwrap(), "--pair", "0", "--anchors", "5", "--cap", "16", "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("features_pair_00000.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5 * 3);
}

#[test]
fn radius_ablation_lists_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data, "4");
    let out = tmp.path().join("abl");
    ok(&[
        "ablate", "--kind", "radius", "--data", data.to_str().unwrap(), "--seeds", "0",
        "--epochs", "1", "--anchors", "4", "--cap", "16", "--out", out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("ablation_radius.csv")).unwrap();
    let variants: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        variants,
        ["single_scale_7.5", "single_scale_4", "single_scale_2.5", "multiscale_concat", "multiscale_attention"]
    );
}

#[test]
fn mapsim_sweep_covers_the_rate_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("map");
    ok(&[
        "mapsim", "--detector", "oracle", "--frames", "10", "--points", "400",
        "--sweep", "0:1:0.1", "--out", out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("mapsim_sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[10][1], 0.0);
    let too_short = pcmr(&["mapsim", "--frames", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(too_short.status.code(), Some(2));
}
