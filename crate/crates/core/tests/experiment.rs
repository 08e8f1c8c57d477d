use std::fs;

use zrp::experiment::{run_experiment, ExperimentConfig, ExperimentError, Manifest};
use zrp::io::ndjson::{read_lines, TrajectoryLine};

const SWEEP: &str = r#"
[model]
g = "unit"
[scale]
N = [64, 128, 256]
T = 0.002
M = 256
[run]
process = "tagged"
replicas = 3
seed = 11
[output]
formats = ["ndjson"]
"#;

#[test]
fn sweep_writes_one_trajectory_file_per_size_and_one_report() {
    let (cfg, res) = ExperimentConfig::from_toml_str(SWEEP, None).unwrap();
    let root = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, &res, &root.path().join("sweep"), &|_| {}).unwrap();
    let names: Vec<String> = Manifest::read(&out.dir).unwrap().files.into_iter().map(|f| f.path).collect();
    let traj: Vec<&String> = names.iter().filter(|n| n.starts_with("trajectories_N")).collect();
    assert_eq!(traj, ["trajectories_N128.ndjson", "trajectories_N256.ndjson", "trajectories_N64.ndjson"]);
    assert_eq!(names.iter().filter(|n| n.ends_with("report.json")).count(), 1);
    assert_eq!(out.report.rows.iter().map(|r| r.n).collect::<Vec<_>>(), [64, 128, 256]);
    let lines: Vec<TrajectoryLine> =
        read_lines(fs::File::open(out.dir.join("trajectories_N64.ndjson")).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.profile.len() == 64 && l.profile[0] >= 1));
}

#[test]
fn missing_rate_names_model_g() {
    let err = ExperimentConfig::from_toml_str("[model]\np = \"nn\"\n", None).unwrap_err();
    match err {
        ExperimentError::ConfigInvalid { path, .. } => assert_eq!(path, "model.g"),
        e => panic!("unexpected {e}"),
    }
    let err = ExperimentConfig::from_toml_str("[run]\nreplicas = 1\n", None).unwrap_err();
    assert!(matches!(err, ExperimentError::ConfigInvalid { ref path, .. } if path == "model.g"), "{err}");
}

#[test]
fn snapshot_materialises_defaults() {
    let (cfg, res) = ExperimentConfig::from_toml_str("[model]\ng = \"pow:0.5\"\n[scale]\nN = [8]\nT = 0.001\nM = 32\n[run]\nreplicas = 1\n", None).unwrap();
    let root = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, &res, &root.path().join("d"), &|_| {}).unwrap();
    let text = fs::read_to_string(out.dir.join("config.toml")).unwrap();
    for key in ["p = ", "dt = ", "profile = ", "process = ", "seed = ", "directory = ", "formats = "] {
        assert!(text.contains(key), "{key} missing from {text}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            zrp::experiment::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
