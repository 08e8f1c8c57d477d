//! Experiment orchestration: configuration, the replica farm, persisted
//! outputs and the content manifest.
//!
//! One experiment writes one fresh directory:
//!
//! ```text
//! config.toml                materialised configuration
//! field.csv                  PDE solution (t,u,rho)             [csv]
//! trajectories_N{N}.ndjson   one line per replica and checkpoint [ndjson]
//! sde.ndjson                 limit-SDE paths, tagged/second-class [ndjson]
//! report.json, summary.csv   per-N summary
//! verify_{suite}.json        one comparison report per requested suite
//! gaps_{rate}.csv            gap tables when the gaps suite runs
//! manifest.json              sha256 of every file above
//! ```

mod config;
mod export;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{integrate, Coefficient, CoefficientFn, DiffusionSpec};
use crate::hydro::{flux_for_profile, solve, HydroSpec};
use crate::io::csv::{write_gap_csv, GapCsvRow};
use crate::io::ndjson::{write_lines, SdeLine, TrajectoryLine};
use crate::rng::derive_seed;
use crate::sim::{OriginObservable, Process, SimulationSpec, Simulator};
use crate::verify::{block_l1_fields, gaps_suite, run_suite, ComparisonReport, SuiteContext, SuiteKind};

pub use export::{export_plot_inputs, PlotIndex};
pub use config::{
    ExperimentConfig, Format, InitialSection, ModelSection, OutputSection, Resolved, RunSection, ScaleSection,
    VerifySection,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration at {path}: {reason}")]
    ConfigInvalid { path: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("output directory {0} exists and is not empty")]
    OutputExists(String),
    #[error("manifest mismatch for {0}")]
    ManifestMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::ConfigInvalid { .. } => EXIT_CONFIG,
            ExperimentError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_IO,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.display().to_string(), source }
    }
}

fn numerical(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

/// Parses a config file; relative `table:FILE` specs resolve against its
/// directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Resolved), ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path.parent())
}

/// `$ZRP_OUT`, or the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os("ZRP_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// The configured directory, under [`output_root`] when relative.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let d = Path::new(&cfg.output.directory);
    if d.is_absolute() {
        d.to_path_buf()
    } else {
        output_root().join(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

fn hash_file(path: &Path) -> Result<(String, u64), ExperimentError> {
    let bytes = fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl Manifest {
    /// Hashes every regular file in `dir` except the manifest itself.
    pub fn scan(dir: &Path) -> Result<Self, ExperimentError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))? {
            let entry = entry.map_err(|e| ExperimentError::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST && entry.path().is_file() {
                names.push(name);
            }
        }
        names.sort();
        let files = names
            .into_iter()
            .map(|name| {
                let (sha256, bytes) = hash_file(&dir.join(&name))?;
                Ok(ManifestEntry { path: name, sha256, bytes })
            })
            .collect::<Result<_, ExperimentError>>()?;
        Ok(Self { files })
    }

    pub fn read(dir: &Path) -> Result<Self, ExperimentError> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| ExperimentError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::ManifestMismatch(format!("{MANIFEST}: {e}")))
    }

    /// Re-hashes the listed files; fails on the first mismatch or missing file.
    pub fn check(&self, dir: &Path) -> Result<(), ExperimentError> {
        for f in &self.files {
            let p = dir.join(&f.path);
            if !p.is_file() {
                return Err(ExperimentError::ManifestMismatch(format!("{} is missing", f.path)));
            }
            if hash_file(&p)?.0 != f.sha256 {
                return Err(ExperimentError::ManifestMismatch(f.path.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub replicas: u64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_qv: f64,
    /// Block `L^1` distance between the replica-mean lab profile and the
    /// PDE at the horizon.
    pub block_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub process: Process,
    pub rows: Vec<SummaryRow>,
    pub suites: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub report: ExperimentReport,
    pub verify: Vec<ComparisonReport>,
}

impl ExperimentOutcome {
    pub fn all_pass(&self) -> bool {
        self.verify.iter().all(|r| r.pass)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| ExperimentError::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), ExperimentError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| ExperimentError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn prepare_dir(dir: &Path) -> Result<(), ExperimentError> {
    if dir.exists() {
        let mut it = fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))?;
        if it.next().is_some() {
            return Err(ExperimentError::OutputExists(dir.display().to_string()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}

fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

/// Runs the configured sweep into `dir`, which must be absent or empty.
/// Progress goes to `progress`; data only to files.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    res: &Resolved,
    dir: &Path,
    progress: &dyn Fn(&str),
) -> Result<ExperimentOutcome, ExperimentError> {
    prepare_dir(dir)?;
    let csv = cfg.output.formats.contains(&Format::Csv);
    let ndjson = cfg.output.formats.contains(&Format::Ndjson);
    let sigma2 = res.kernel.sigma2();
    let t = cfg.scale.t;
    write_with(&dir.join("config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;

    progress("solving the hydrodynamic equation");
    let flux = flux_for_profile(&res.g, &res.profile).map_err(numerical)?;
    let mut hspec = HydroSpec::new(sigma2, t, cfg.scale.m);
    hspec.checkpoints = cfg.run.checkpoints.clone();
    let field = solve(&res.profile, &flux, &hspec).map_err(numerical)?;
    if csv {
        write_with(&dir.join("field.csv"), |w| field.write_csv(w))?;
    }

    let mut rows = Vec::new();
    for &n in &cfg.scale.n {
        progress(&format!("simulating {} replicas at N={n}", cfg.run.replicas));
        let mut spec = SimulationSpec::new(cfg.run.process, res.g.clone(), n, t, res.profile, derive_seed(cfg.run.seed, n as u64));
        spec.kernel = res.kernel.clone();
        spec.checkpoints = cfg.run.checkpoints.clone();
        if cfg.run.process != Process::Bulk {
            spec.observables = vec![OriginObservable::PerParticleRate];
        }
        let sim = Simulator::new(spec).map_err(|e| ExperimentError::ConfigInvalid {
            path: "run".into(),
            reason: e.to_string(),
        })?;
        let records = sim.run_replicas(0..cfg.run.replicas);
        if ndjson {
            let lines: Vec<TrajectoryLine> = records.iter().flat_map(TrajectoryLine::from_record).collect();
            write_with(&dir.join(format!("trajectories_N{n}.ndjson")), |w| write_lines(w, &lines))?;
        }
        let xs: Vec<f64> = records.iter().map(|r| r.last().rescaled_position(n)).collect();
        let qvs: Vec<f64> = records.iter().map(|r| r.last().qv).collect();
        let mut mean_lab = vec![0.0; n];
        for r in &records {
            mean_lab.iter_mut().zip(r.last().lab_profile(cfg.run.process)).for_each(|(a, c)| *a += c as f64);
        }
        mean_lab.iter_mut().for_each(|a| *a /= records.len() as f64);
        let pde = (0..n)
            .map(|x| field.interpolate(t, x as f64 / n as f64))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(numerical)?;
        let (mean_x, var_x) = stats(&xs);
        rows.push(SummaryRow {
            n,
            replicas: cfg.run.replicas,
            mean_x,
            var_x,
            mean_qv: stats(&qvs).0,
            block_l1: block_l1_fields(&mean_lab, &pde),
        });
    }

    if ndjson && cfg.run.process != Process::Bulk {
        progress("integrating the limit SDE");
        let spec = DiffusionSpec {
            coefficient: if cfg.run.process == Process::SecondClass {
                Coefficient::SecondClassChi
            } else {
                Coefficient::TaggedPsi
            },
            sigma2,
            dt: cfg.scale.dt,
            horizon: t,
            replicas: cfg.run.replicas,
            seed: derive_seed(cfg.run.seed, 0x5DE),
            checkpoints: cfg.run.checkpoints.clone(),
        };
        let coef = match spec.coefficient {
            Coefficient::TaggedPsi => CoefficientFn::Psi(&flux),
            Coefficient::SecondClassChi => CoefficientFn::Chi,
        };
        let ens = integrate(&spec, &field, &coef).map_err(numerical)?;
        write_with(&dir.join("sde.ndjson"), |w| write_lines(w, &SdeLine::from_ensemble(&ens)))?;
    }

    let mut verify = Vec::new();
    if let Some(v) = &cfg.verify {
        let ctx = SuiteContext::new(res.g.clone(), res.kernel.clone(), v.settings.clone());
        for &kind in &v.suites {
            progress(&format!("verification suite {}", kind.name()));
            let rep = if kind == SuiteKind::Gaps {
                let (rep, tables) = gaps_suite(&ctx).map_err(numerical)?;
                for (label, table) in tables {
                    let rows: Vec<GapCsvRow> = table.rows.iter().flat_map(GapCsvRow::pair_from_lemma).collect();
                    let name = format!("gaps_{}.csv", sanitize(&label));
                    write_with(&dir.join(name), |w| write_gap_csv(w, &rows))?;
                }
                rep
            } else {
                run_suite(kind, &ctx).map_err(numerical)?
            };
            write_json(&dir.join(format!("verify_{}.json", kind.name())), &rep)?;
            verify.push(rep);
        }
    }

    let report = ExperimentReport {
        process: cfg.run.process,
        suites: verify.iter().map(|r| (r.test_name(), r.pass)).collect(),
        rows,
    };
    write_json(&dir.join("report.json"), &report)?;
    if csv {
        write_with(&dir.join("summary.csv"), |w| {
            writeln!(w, "N,replicas,mean_x,var_x,mean_qv,block_l1")?;
            for r in &report.rows {
                writeln!(w, "{},{},{:e},{:e},{:e},{:e}", r.n, r.replicas, r.mean_x, r.var_x, r.mean_qv, r.block_l1)?;
            }
            Ok(())
        })?;
    }
    let manifest = Manifest::scan(dir)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(ExperimentOutcome { dir: dir.to_path_buf(), report, verify })
}

/// File-name-safe form of a label such as `pow:0.5`.
pub fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

impl ComparisonReport {
    pub fn test_name(&self) -> String {
        self.test.name().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "[model]\ng = \"unit\"\n[scale]\nN = [16, 24]\nT = 0.02\nM = 64\n\
                       [run]\nprocess = \"tagged\"\nreplicas = 4\nseed = 3\ncheckpoints = [0.01]\n";

    #[test]
    fn rerun_gives_identical_manifest() {
        let (cfg, res) = ExperimentConfig::from_toml_str(DOC, None).unwrap();
        let root = tempfile::tempdir().unwrap();
        let a = run_experiment(&cfg, &res, &root.path().join("a"), &|_| {}).unwrap();
        let b = run_experiment(&cfg, &res, &root.path().join("b"), &|_| {}).unwrap();
        let ma = fs::read(a.dir.join(MANIFEST)).unwrap();
        assert_eq!(ma, fs::read(b.dir.join(MANIFEST)).unwrap());
        let m = Manifest::read(&a.dir).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(
            names,
            [
                "config.toml",
                "field.csv",
                "report.json",
                "sde.ndjson",
                "summary.csv",
                "trajectories_N16.ndjson",
                "trajectories_N24.ndjson"
            ]
        );
        m.check(&a.dir).unwrap();
        fs::write(a.dir.join("summary.csv"), "tampered").unwrap();
        assert!(matches!(m.check(&a.dir), Err(ExperimentError::ManifestMismatch(_))));
        assert!(matches!(
            run_experiment(&cfg, &res, &a.dir, &|_| {}),
            Err(ExperimentError::OutputExists(_))
        ));
    }

    #[test]
    fn snapshot_reproduces_config() {
        let (cfg, res) = ExperimentConfig::from_toml_str(DOC, None).unwrap();
        let root = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, &res, &root.path().join("x"), &|_| {}).unwrap();
        let (again, _) = load_config(&out.dir.join("config.toml")).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(out.report.rows.len(), 2);
    }

    #[test]
    fn plot_export_reads_a_verified_run() {
        let doc = format!("{DOC}[verify]\nsuites = [\"gaps\"]\ngap_l_max = 2\ngap_j_max = 5\n");
        let (cfg, res) = ExperimentConfig::from_toml_str(&doc, None).unwrap();
        let root = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, &res, &root.path().join("x"), &|_| {}).unwrap();
        let files = export_plot_inputs(&out.dir, &root.path().join("plots")).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["density_overlay.csv", "positions.csv", "gap_scaling.csv", "plots.json"]);
        let index: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(root.path().join("plots/plots.json")).unwrap()).unwrap();
        assert!(index["reported"]["gap_exponent"].is_f64());
        fs::write(out.dir.join("field.csv"), "t,u,rho\n").unwrap();
        assert!(matches!(
            export_plot_inputs(&out.dir, &root.path().join("p2")),
            Err(ExperimentError::ManifestMismatch(_))
        ));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExperimentError::ConfigInvalid { path: "model.g".into(), reason: String::new() }.exit_code(), 2);
        assert_eq!(ExperimentError::Numerical(String::new()).exit_code(), 3);
        assert_eq!(sanitize("pow:0.5"), "pow_0.5");
    }
}
