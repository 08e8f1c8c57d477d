//! Replays the checked-in fuzz corpus through the same entry points and
//! assertions as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use zrp::experiment::ExperimentConfig;
use zrp::hydro::DensityField;
use zrp::io::{csv, ndjson, spec};

fn corpus(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.iter().filter_map(|p| String::from_utf8(fs::read(p).unwrap()).ok()).collect()
}

#[test]
fn spec_parsers() {
    for s in corpus("spec_rate") {
        if let Ok(g) = spec::parse_rate_inline(&s) {
            spec::parse_rate_inline(&g.label()).unwrap();
        }
    }
    for s in corpus("spec_rate_table") {
        let _ = spec::parse_rate_table(&s);
    }
    for s in corpus("spec_profile") {
        if let Ok(p) = spec::parse_profile(&s) {
            assert!(p.eval(0.25) >= 0.0);
        }
    }
    for s in corpus("spec_kernel") {
        if let Ok(k) = spec::parse_kernel(&s) {
            assert_eq!(spec::parse_kernel(&k.label()).unwrap(), k);
        }
    }
    for s in corpus("spec_times") {
        let _ = spec::parse_times(&s);
    }
    for s in corpus("spec_sizes") {
        let _ = spec::parse_sizes(&s);
    }
    for s in corpus("spec_range") {
        if let Ok((a, b)) = spec::parse_range(&s) {
            assert!(a <= b);
        }
    }
}

#[test]
fn record_decoders() {
    let lines = corpus("ndjson_trajectory");
    assert!(lines.iter().any(|s| ndjson::parse_trajectory_line(s).is_ok()));
    for s in corpus("ndjson_configuration") {
        if let Ok(c) = ndjson::parse_configuration_line(&s) {
            c.verify().unwrap();
        }
    }
    let fields: Vec<bool> = corpus("field_csv").iter().map(|s| DensityField::read_csv(s.as_bytes(), 1.0).is_ok()).collect();
    assert!(fields.contains(&true) && fields.contains(&false));
    for s in corpus("gap_csv") {
        csv::read_gap_csv(&s).unwrap();
    }
}

#[test]
fn experiment_documents() {
    let ok: Vec<bool> = corpus("experiment_toml").iter().map(|s| ExperimentConfig::from_toml_str(s, None).is_ok()).collect();
    assert!(ok.contains(&true) && ok.contains(&false));
}
