//! Line-delimited JSON records.
//!
//! Trajectory lines, one per replica and checkpoint:
//!
//! ```text
//! {"replica":0,"t":0.1,"X":-3,"x_rescaled":-0.046875,"qv":0.051,"profile":[...],"integrals":{"g_over_k":0.05}}
//! ```
//!
//! `profile` is in the natural frame of the process (lab frame for bulk,
//! frame of the distinguished particle otherwise). Configuration lines are
//! `{"occupancy":[...],"tag":{"position":0,"kind":"tagged"}}` with `tag`
//! optional. SDE lines are
//! `{"replica":0,"t":0.1,"x":0.12,"x_wrapped":0.12,"qv":0.05,"predicted_qv":0.05}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::diffusion::Ensemble;
use crate::model::Configuration;
use crate::sim::TrajectoryRecord;

#[derive(Debug, thiserror::Error)]
pub enum NdjsonError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryLine {
    pub replica: u64,
    pub t: f64,
    #[serde(rename = "X")]
    pub x: i64,
    pub x_rescaled: f64,
    pub qv: f64,
    pub profile: Vec<u32>,
    pub integrals: BTreeMap<String, f64>,
}

impl TrajectoryLine {
    pub fn from_record(record: &TrajectoryRecord) -> Vec<Self> {
        record
            .checkpoints
            .iter()
            .map(|c| Self {
                replica: record.replica,
                t: c.t,
                x: c.position,
                x_rescaled: c.rescaled_position(record.n_sites),
                qv: c.qv,
                profile: c.profile.clone(),
                integrals: c.integrals.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeLine {
    pub replica: u64,
    pub t: f64,
    pub x: f64,
    pub x_wrapped: f64,
    pub qv: f64,
    pub predicted_qv: f64,
}

impl SdeLine {
    /// One line per path and recorded time, ordered by replica then time.
    pub fn from_ensemble(e: &Ensemble) -> Vec<Self> {
        let replicas = e.unwrapped.first().map_or(0, |v| v.len());
        let mut out = Vec::with_capacity(replicas * e.times.len());
        for r in 0..replicas {
            for (k, &t) in e.times.iter().enumerate() {
                let x = e.unwrapped[k][r];
                out.push(Self {
                    replica: r as u64,
                    t,
                    x,
                    x_wrapped: x.rem_euclid(1.0),
                    qv: e.realized_qv[k][r],
                    predicted_qv: e.predicted_qv[k][r],
                });
            }
        }
        out
    }
}

pub fn write_lines<W: Write, T: Serialize>(mut out: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parse every non-blank line as `T`.
pub fn read_lines<R: BufRead, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, NdjsonError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| NdjsonError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn parse_trajectory_line(s: &str) -> Result<TrajectoryLine, serde_json::Error> {
    serde_json::from_str(s)
}

/// Configuration line; validation (tag occupancy, non-empty torus) runs on
/// deserialisation.
pub fn parse_configuration_line(s: &str) -> Result<Configuration, serde_json::Error> {
    serde_json::from_str(s)
}
