use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gazekit_cli::demo::{write_demo, DemoSpec};
use serde_json::Value;

fn gazekit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazekit")).args(args).current_dir(dir).output().unwrap()
}

fn demo() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let spec = DemoSpec { images: 6, size: 16, fixations_per_image: 40, ..DemoSpec::default() };
    let config = write_demo(dir.path(), &spec).unwrap();
    (dir, config)
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn edit_config(config: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_slice(&std::fs::read(config).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(config, serde_json::to_vec(&v).unwrap()).unwrap();
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gazekit(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_flag_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = gazekit(&["evaluate", "-c", "x.json", "--frob"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--frob"));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gazekit(&["evaluate", "-c", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_metric_is_a_validation_error() {
    let (dir, config) = demo();
    edit_config(&config, |v| v["metrics"] = serde_json::json!(["IG", "XYZ"]));
    let out = gazekit(&["evaluate", "-c", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = gazekit(&["calibrate", "-c", config.to_str().unwrap(), "-k", "1", "--model", "truth"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_of_bounds_fixation_is_rejected() {
    let (dir, config) = demo();
    let fix = dir.path().join("fixations.csv");
    let mut text = std::fs::read_to_string(&fix).unwrap();
    text.push_str("img000,s0,16.0,0.0\n");
    std::fs::write(&fix, text).unwrap();
    let out = gazekit(&["folds", "-c", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("img000"));
}

#[test]
fn baseline_against_itself_has_zero_gain() {
    let (dir, config) = demo();
    edit_config(&config, |v| v["baseline"] = "truth".into());
    let out = gazekit(&["evaluate", "-c", config.to_str().unwrap(), "--metric", "ig", "--model", "truth"], dir.path());
    let v = json(&out);
    assert_eq!(v["models"]["truth"]["IG"]["aggregate"].as_f64(), Some(0.0));
}

#[test]
fn self_sampled_fixations_are_calibrated() {
    let (dir, config) = demo();
    let v = json(&gazekit(&["calibrate", "-c", config.to_str().unwrap(), "-k", "4", "--model", "truth", "--plot-data"], dir.path()));
    assert_eq!(v["verdict"], "calibrated");
    assert_eq!(v["bins"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(dir.path().join("out/calibration_truth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let v = json(&gazekit(&["calibrate", "-c", config.to_str().unwrap(), "--model", "sharp"], dir.path()));
    assert_eq!(v["verdict"], "overconfident");
}

#[test]
fn full_report_rows() {
    let (dir, config) = demo();
    let v = json(&gazekit(&["evaluate", "-c", config.to_str().unwrap(), "--full"], dir.path()));
    let columns: Vec<&str> = v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    assert_eq!(columns, ["IG", "AUC", "sAUC", "NSS", "CC", "KLDiv", "SIM"]);
    let rows = v["rows"].as_array().unwrap();
    let row = |name: &str| rows.iter().find(|r| r["model"] == name).unwrap().clone();
    assert_eq!(row("centerbias")["IG"].as_f64(), Some(0.0));
    assert_eq!(row("centerbias")["relative_score"].as_f64(), Some(0.0));
    assert_eq!(row("gold_standard")["relative_score"].as_f64(), Some(100.0));
    assert!(rows.iter().any(|r| r["model"] == "sharp_flat"));
    let igs: Vec<f64> = rows.iter().map(|r| r["IG"].as_f64().unwrap()).collect();
    assert!(igs.windows(2).all(|w| w[0] >= w[1]));
    for r in rows {
        for c in &columns {
            assert!(r[*c].is_number(), "{} {c}", r["model"]);
        }
    }
}

#[test]
fn ensemble_sweep_disagree_and_folds() {
    let (dir, config) = demo();
    let c = config.to_str().unwrap();
    let v = json(&gazekit(&["ensemble", "-c", c, "--dsre", "3", "--models", "a,b"], dir.path()));
    assert_eq!(v["members"].as_array().unwrap().len(), 6);
    assert!(dir.path().join("out/ensemble/dsre_x3/img000.fdf").exists());
    let v = json(&gazekit(&["ensemble", "-c", c, "--weights", "truth=1.0"], dir.path()));
    assert_eq!(v["information_gain"]["mixture"], v["information_gain"]["members"]["truth"]);
    let out = gazekit(&["ensemble", "-c", c, "--weights", "truth=0.7"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let v = json(&gazekit(&["sweep", "-c", c, "--models", "truth,truth", "--steps", "5"], dir.path()));
    let curve: Vec<f64> = v["curve"].as_array().unwrap().iter().map(|p| p["information_gain"].as_f64().unwrap()).collect();
    assert!(curve.iter().all(|&x| (x - curve[0]).abs() < 1e-12));
    let out = gazekit(&["sweep", "-c", c, "--models", "truth", "--steps", "5"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let v = json(&gazekit(&["disagree", "-c", c, "--models", "truth,truth"], dir.path()));
    assert!(v["ranking"].as_array().unwrap().iter().all(|r| r["js_divergence"].as_f64() == Some(0.0)));

    let v = json(&gazekit(&["folds", "-c", c], dir.path()));
    assert_eq!(v["fold_sizes"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum::<u64>(), 6);
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let (dir, config) = demo();
    let v = json(&gazekit(&["train", "-c", config.to_str().unwrap(), "--rotation", "1"], dir.path()));
    assert_eq!(v["epochs"], 4);
    let out = dir.path().join("out/train/rotation_1");
    let bytes = std::fs::read(out.join("checkpoint.gzkr")).unwrap();
    let (model, header) = gazekit::readout::read_checkpoint::<f64>(&bytes).unwrap();
    assert_eq!(header.widths, vec![4, 4, 1]);
    assert!((model.alpha - v["alpha"].as_f64().unwrap()).abs() < 1e-14);
    let trace = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    let test: Vec<&Value> = v["images"]["test"].as_array().unwrap().iter().collect();
    for id in test {
        assert!(out.join(format!("densities/{}.fdf", id.as_str().unwrap())).exists());
    }
    let out = gazekit(&["train", "-c", config.to_str().unwrap(), "--rotation", "9"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baseline_writes_densities() {
    let (dir, config) = demo();
    let v = json(&gazekit(&["baseline", "-c", config.to_str().unwrap(), "--crossvalidate-cb"], dir.path()));
    assert_eq!(v["crossvalidated"], true);
    assert_eq!(v["centerbias"].as_object().unwrap().len(), 6);
    for sub in ["centerbias", "gold_standard"] {
        let bytes = std::fs::read(dir.path().join(format!("out/baseline/{sub}/img002.fdf"))).unwrap();
        assert!(gazekit::io::read_density::<f64>(&bytes).is_ok());
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}
