use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kalmdp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kalmdp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KALMDP_OUT")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn base_run_writes_full_bundle() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["run", "--grid", "21", "--trials", "100", "--out", "bundle"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("bundle");
    assert_eq!(
        entries(&dir),
        ["heatmap.csv", "manifest.json", "model.sta", "model.tra", "report.json", "simulation.json", "values.csv"]
    );
    let report = json(&dir.join("report.json"));
    assert_eq!(report["states"], 7059);
    assert_eq!(report["regions"], 441);

    let heatmap = fs::read_to_string(dir.join("heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().count(), 442);

    let sim = json(&dir.join("simulation.json"));
    let run = &sim["runs"][0];
    assert_eq!(run["trials"], 100);
    assert_eq!(run["consistent"], true);

    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["config"]["grid"], serde_json::json!([21, 21]));
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 7);
    assert_eq!(entries(tmp.path()), ["bundle"], "staging directory left behind");
}

#[test]
fn two_phase_run_reports_fewer_states() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["run", "--benchmark", "double-integrator", "--grid", "21", "--nbar", "3", "--no-simulate"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("kalmdp-out/report.json"));
    assert_eq!(report["states"], 1767);
    assert_eq!(report["layers"]["steady"], 1);
    assert!(!tmp.path().join("kalmdp-out/simulation.json").exists());
}

#[test]
fn invalid_config_leaves_no_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["run", "--nbar", "40", "--theta=-1", "--beta", "3", "--out", "never"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for field in ["nbar", "theta", "beta"] {
        assert!(stderr.contains(field), "missing {field} in: {stderr}");
    }
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn runtime_failure_removes_partial_output() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("occupied"), "a file where the bundle should go").unwrap();
    let out = kalmdp(&["export-prism", "--grid", "5", "--out", "occupied"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(entries(tmp.path()), ["occupied"]);
}

#[test]
fn verify_passes_on_default_config() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["verify"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let summary: Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["suites"].as_array().unwrap().len(), 7);
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn verify_rejects_negative_theta() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["verify", "--theta", "-1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
}

#[test]
fn verify_reports_tampered_row() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["verify", "--grid", "11", "--inject-fault", "tampered-row"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL abstraction-integrity")), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS kalman-psd")), "{stdout}");
}

#[test]
fn export_prism_round_trips() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["export-prism", "--grid", "11", "--horizon", "6", "--nbar", "2", "--out", "p"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("p");
    assert_eq!(entries(&dir), ["manifest.json", "model.sta", "model.tra", "report.json"]);
    let model = kalmdp::prism::import_prism(&dir.join("model.sta"), &dir.join("model.tra")).unwrap();
    let report = json(&dir.join("report.json"));
    assert_eq!(model.states.len() as u64, report["states"].as_u64().unwrap());
    assert_eq!(model.choices as u64, report["choices"].as_u64().unwrap());
    assert_eq!(model.transitions.len() as u64, report["transitions"].as_u64().unwrap());
}

#[test]
fn identical_config_gives_identical_bundle() {
    let tmp = TempDir::new().unwrap();
    let args = |dir: &'static str| ["run", "--grid", "11", "--horizon", "6", "--nbar", "2", "--trials", "200", "--seed", "9", "--trajectories", "--out", dir];
    for dir in ["a", "b"] {
        let out = kalmdp(&args(dir), tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(entries(&a), entries(&b));
    for name in entries(&a) {
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name} differs");
    }
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    assert_eq!(ma["simulation_seed"], mb["simulation_seed"]);
    assert_eq!(ma["config"]["seed"], 9);
}

#[test]
fn manifest_reproduces_run() {
    let tmp = TempDir::new().unwrap();
    let out = kalmdp(&["run", "--grid", "9", "--horizon", "5", "--nbar", "2", "--trials", "50", "--out", "first"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = kalmdp(&["run", "--config", "first/manifest.json", "--out", "second"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["report.json", "values.csv", "simulation.json", "model.tra"] {
        let first = fs::read(tmp.path().join("first").join(name)).unwrap();
        assert_eq!(first, fs::read(tmp.path().join("second").join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kalmdp"))
        .args(["simulate", "--grid", "7", "--horizon", "4", "--trials", "20"])
        .current_dir(tmp.path())
        .env("KALMDP_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(entries(&tmp.path().join("from-env")), ["manifest.json", "report.json", "simulation.json"]);
}

#[test]
fn inline_benchmark_config_runs() {
    let tmp = TempDir::new().unwrap();
    let config = r#"{
        "benchmark": {
            "name": "scalar-walk",
            "a": [[1.0]], "b": [[1.0]], "c": [[1.0]],
            "process_noise_cov": [[0.05]], "meas_noise_cov": [[0.05]],
            "control_box": {"lo": [-1], "hi": [1]},
            "state_domain": {"lo": [-6], "hi": [6]},
            "initial_cov": [[0.5]],
            "horizon": 8,
            "goal_regions": [{"lo": [3], "hi": ["inf"]}],
            "critical_regions": [{"lo": ["-inf"], "hi": [-4]}],
            "grid": [24]
        },
        "trials": 200,
        "sim_regions": [12]
    }"#;
    fs::write(tmp.path().join("scalar.json"), config).unwrap();
    let out = kalmdp(&["run", "--config", "scalar.json", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("s/report.json"));
    assert_eq!(report["benchmark"], "scalar-walk");
    assert_eq!(report["states"], 8 * 24 + 3);
    let sim = json(&tmp.path().join("s/simulation.json"));
    assert_eq!(sim["runs"][0]["consistent"], true);
}
