//! Plot-ready tables derived from a finished experiment directory.
//!
//! Nothing here recomputes a statistic: the tables are reshaped persisted
//! outputs, and the reported values are copied from the verifier's JSON.
//!
//! | file                  | columns                          |
//! |-----------------------|----------------------------------|
//! | `density_overlay.csv` | `N,u,empirical,pde`              |
//! | `positions.csv`       | `source,N,x`                     |
//! | `discrepancy.csv`     | `series,N,value`                 |
//! | `gap_scaling.csv`     | `rate,l,j,rho,W,env`             |
//! | `plots.json`          | figure to file map, reported fit |

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{load_config, ExperimentError, Manifest, MANIFEST};
use crate::hydro::DensityField;
use crate::io::csv::read_gap_csv;
use crate::io::ndjson::{read_lines, SdeLine, TrajectoryLine};
use crate::sim::Process;
use crate::verify::ComparisonReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotIndex {
    /// sha256 of the source `manifest.json`.
    pub source_manifest: String,
    pub process: Process,
    /// Figure name to table file.
    pub figures: BTreeMap<String, String>,
    /// Values the plots re-fit and compare against.
    pub reported: BTreeMap<String, f64>,
}

fn read(dir: &Path, name: &str) -> Result<String, ExperimentError> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| ExperimentError::io(&p, e))
}

fn bad(name: &str, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::ManifestMismatch(format!("{name}: {e}"))
}

fn final_lines(dir: &Path, name: &str) -> Result<Vec<TrajectoryLine>, ExperimentError> {
    let p = dir.join(name);
    let f = fs::File::open(&p).map_err(|e| ExperimentError::io(&p, e))?;
    let lines: Vec<TrajectoryLine> = read_lines(BufReader::new(f)).map_err(|e| bad(name, e))?;
    let t = lines.iter().map(|l| l.t).fold(f64::NEG_INFINITY, f64::max);
    Ok(lines.into_iter().filter(|l| l.t == t).collect())
}

fn block_rows(out: &mut String, n: usize, emp: &[f64], pde: &[f64]) {
    let size = ((n as f64).sqrt().floor() as usize).max(1);
    for s in (0..n).step_by(size) {
        let len = size.min(n - s);
        let (e, p) = (emp[s..s + len].iter().sum::<f64>() / len as f64, pde[s..s + len].iter().sum::<f64>() / len as f64);
        let u = (s as f64 + len as f64 / 2.0) / n as f64;
        out.push_str(&format!("{n},{u},{e:e},{p:e}\n"));
    }
}

/// Checks the manifest of `dir`, then writes the tables above into `out`.
/// Returns the written paths.
pub fn export_plot_inputs(dir: &Path, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let manifest = Manifest::read(dir)?;
    manifest.check(dir)?;
    let source_manifest = hex::encode(Sha256::digest(read(dir, MANIFEST)?.as_bytes()));
    let (cfg, _) = load_config(&dir.join("config.toml"))?;
    let names: Vec<&str> = manifest.files.iter().map(|f| f.path.as_str()).collect();
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;

    let mut index = PlotIndex { source_manifest, process: cfg.run.process, figures: BTreeMap::new(), reported: BTreeMap::new() };
    let mut written = Vec::new();
    let mut emit = |name: &str, figure: &str, body: String, index: &mut PlotIndex| -> Result<(), ExperimentError> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| ExperimentError::io(&p, e))?;
        index.figures.insert(figure.into(), name.into());
        written.push(p);
        Ok(())
    };

    let mut sizes: Vec<usize> = names
        .iter()
        .filter_map(|n| n.strip_prefix("trajectories_N")?.strip_suffix(".ndjson")?.parse().ok())
        .collect();
    sizes.sort_unstable();
    let field = if names.contains(&"field.csv") {
        let text = read(dir, "field.csv")?;
        Some(DensityField::read_csv(text.as_bytes(), 1.0).map_err(|e| bad("field.csv", e))?)
    } else {
        None
    };

    let mut positions = String::from("source,N,x\n");
    if let (Some(field), false) = (&field, sizes.is_empty()) {
        let t = field.horizon();
        let mut overlay = String::from("N,u,empirical,pde\n");
        for &n in &sizes {
            let lines = final_lines(dir, &format!("trajectories_N{n}.ndjson"))?;
            let mut emp = vec![0.0; n];
            let mut pde = vec![0.0; n];
            for l in &lines {
                if l.profile.len() != n {
                    return Err(bad("trajectories", format!("profile length {} at N={n}", l.profile.len())));
                }
                emp.iter_mut().zip(&l.profile).for_each(|(a, &c)| *a += c as f64);
                for (x, p) in pde.iter_mut().enumerate() {
                    *p += field.interpolate(t, x as f64 / n as f64 + l.x_rescaled).map_err(|e| bad("field.csv", e))?;
                }
                if cfg.run.process != Process::Bulk {
                    positions.push_str(&format!("particle,{n},{:e}\n", l.x_rescaled));
                }
            }
            let r = lines.len().max(1) as f64;
            emp.iter_mut().chain(pde.iter_mut()).for_each(|a| *a /= r);
            block_rows(&mut overlay, n, &emp, &pde);
        }
        emit("density_overlay.csv", "density-overlay", overlay, &mut index)?;
    }
    if names.contains(&"sde.ndjson") {
        let f = fs::File::open(dir.join("sde.ndjson")).map_err(|e| ExperimentError::io(dir, e))?;
        let lines: Vec<SdeLine> = read_lines(BufReader::new(f)).map_err(|e| bad("sde.ndjson", e))?;
        let t = lines.iter().map(|l| l.t).fold(f64::NEG_INFINITY, f64::max);
        for l in lines.iter().filter(|l| l.t == t) {
            positions.push_str(&format!("sde,0,{:e}\n", l.x));
        }
    }
    if positions.lines().count() > 1 {
        emit("positions.csv", "position-histogram", positions, &mut index)?;
    }

    if names.contains(&"verify_replacement.json") {
        let rep: ComparisonReport =
            serde_json::from_str(&read(dir, "verify_replacement.json")?).map_err(|e| bad("verify_replacement.json", e))?;
        let mut body = String::from("series,N,value\n");
        body.push_str(&rep.n_values.iter().zip(&rep.statistics).map(|(n, v)| format!("median,{n},{v:e}\n")).collect::<String>());
        for (name, vals) in rep.series.iter().filter(|(k, v)| k.starts_with("replace:") && v.len() == rep.n_values.len()) {
            body.push_str(&rep.n_values.iter().zip(vals).map(|(n, v)| format!("{name},{n},{v:e}\n")).collect::<String>());
        }
        emit("discrepancy.csv", "discrepancy-decay", body, &mut index)?;
    }

    let gap_files: Vec<&str> = names.iter().copied().filter(|n| n.starts_with("gaps_") && n.ends_with(".csv")).collect();
    if !gap_files.is_empty() {
        let mut body = String::from("rate,l,j,rho,W,env\n");
        for name in gap_files {
            let rate = &name["gaps_".len()..name.len() - ".csv".len()];
            for r in read_gap_csv(&read(dir, name)?).map_err(|e| bad(name, e))? {
                let rho = r.j as f64 / (2 * r.l + 1) as f64;
                body.push_str(&format!("{rate},{},{},{rho},{:e},{}\n", r.l, r.j, r.w, r.env));
            }
        }
        emit("gap_scaling.csv", "gap-scaling", body, &mut index)?;
        if names.contains(&"verify_gaps.json") {
            let rep: ComparisonReport =
                serde_json::from_str(&read(dir, "verify_gaps.json")?).map_err(|e| bad("verify_gaps.json", e))?;
            if let Some(c) = rep.checks.iter().find(|c| c.name.starts_with("gap exponent")) {
                index.reported.insert("gap_exponent".into(), c.value);
            }
        }
    }

    let p = out.join("plots.json");
    let mut f = fs::File::create(&p).map_err(|e| ExperimentError::io(&p, e))?;
    serde_json::to_writer_pretty(&mut f, &index)
        .map_err(std::io::Error::from)
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| ExperimentError::io(&p, e))?;
    written.push(p);
    Ok(written)
}
