//! Statistical comparison of simulated ensembles against the PDE and SDE
//! limits.
//!
//! Every suite produces a [`ComparisonReport`]. Where a threshold is needed
//! it is calibrated: the same statistic is computed on `null_runs` pairs of
//! samples drawn from one law, and the observed value at the largest `N`
//! must fall below the `null_quantile` of that null distribution. Trend
//! checks require strictly more than half of consecutive pairs to decrease.
//! Only finite-dimensional marginals at checkpoints are compared.

mod stats;
mod suites;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionError;
use crate::hydro::HydroError;
use crate::measures::MeasureError;
use crate::model::{ModelError, Profile};
use crate::sim::{OriginObservable, ReplacementProbe, SimError};
use crate::spectral::SpectralError;

pub use stats::{
    chi_square_gof, circular_ks, combine_chi_square, decreasing_trend, kolmogorov_q, ks_two_sample, mean, median,
    quantile, ChiSquare, MIN_EXPECTED, MIN_SAMPLE,
};
pub use suites::{
    block_l1_fields, clt_from_samples, clt_null_statistics, clt_report, frame_density_report, gaps_suite, limit_field,
    run_suite, simulate_clt, CltRuns, SuiteContext,
};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("invalid verification settings: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    Hydro,
    TaggedClt,
    FrameDensity,
    SecondClassClt,
    Replacement,
    Ensembles,
    Gaps,
    Invariance,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 8] = [
        SuiteKind::Hydro,
        SuiteKind::TaggedClt,
        SuiteKind::FrameDensity,
        SuiteKind::SecondClassClt,
        SuiteKind::Replacement,
        SuiteKind::Ensembles,
        SuiteKind::Gaps,
        SuiteKind::Invariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Hydro => "hydro",
            SuiteKind::TaggedClt => "tagged-clt",
            SuiteKind::FrameDensity => "frame-density",
            SuiteKind::SecondClassClt => "second-class-clt",
            SuiteKind::Replacement => "replacement",
            SuiteKind::Ensembles => "ensembles",
            SuiteKind::Gaps => "gaps",
            SuiteKind::Invariance => "invariance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// One named pass/fail condition inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value <= bound }
    }

    pub fn above(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value >= bound }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value: f64::from(u8::from(pass)), bound: 1.0, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test: SuiteKind,
    /// What `statistics` holds, e.g. `circular-ks`.
    pub statistic: String,
    pub n_values: Vec<usize>,
    pub statistics: Vec<f64>,
    pub null_threshold: Option<f64>,
    pub trend_decreasing: Option<bool>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Secondary per-`N` series and tables.
    pub series: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; kept out of the serialised report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub runtime: f64,
}

pub const MARGINALS_NOTE: &str =
    "process-level convergence is not tested: only marginals at the final checkpoint are compared";

impl ComparisonReport {
    pub fn new(test: SuiteKind, statistic: &str) -> Self {
        Self {
            test,
            statistic: statistic.into(),
            n_values: Vec::new(),
            statistics: Vec::new(),
            null_threshold: None,
            trend_decreasing: None,
            checks: Vec::new(),
            pass: false,
            series: BTreeMap::new(),
            notes: Vec::new(),
            runtime: 0.0,
        }
    }

    /// Sets `pass` from the checks; a report without checks fails.
    pub fn finish(mut self) -> Self {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }

    /// Adds the trend check on `statistics`, or the insufficient-points note.
    fn add_trend_check(&mut self) {
        self.trend_decreasing = decreasing_trend(&self.statistics);
        match self.trend_decreasing {
            Some(t) => self.checks.push(Check::flag("decreasing in N", t)),
            None => {
                self.notes.push("insufficient trend points".into());
                self.checks.push(Check::flag("decreasing in N", false));
            }
        }
    }
}

/// Scale and tolerances for all suites; defaults are the acceptance scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub n_values: Vec<usize>,
    pub horizon: f64,
    pub profile: Profile,
    pub seed: u64,
    /// PDE grid used as the limit for every particle suite.
    pub grid_size: usize,
    /// Euler–Maruyama steps over the horizon.
    pub sde_steps: usize,
    pub null_runs: usize,
    pub null_quantile: f64,
    pub hydro_replicas: u64,
    pub clt_replicas: u64,
    pub reference_paths: u64,
    pub qv_tolerance: f64,
    pub frame_factor: f64,
    pub replacement_replicas: u64,
    pub replacement_density: f64,
    pub probe: ReplacementProbe,
    /// Extra `(eps_inner, eps_outer)` pair reported with its swap.
    pub asymmetric_pair: (f64, f64),
    pub swap_tolerance: f64,
    pub ensemble_l: (usize, usize),
    pub ensemble_ratio: f64,
    pub gap_l_max: usize,
    pub gap_j_max: u32,
    pub gap_trend_l: usize,
    pub gap_exponent_range: (f64, f64),
    pub invariance_n: usize,
    pub invariance_horizon: f64,
    pub invariance_densities: Vec<f64>,
    pub invariance_seeds: u64,
    pub invariance_replicas: u64,
    pub invariance_p_min: f64,
    pub invariance_min_pass: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            n_values: vec![64, 128, 256],
            horizon: 0.1,
            profile: Profile::sine(1.0, 0.5),
            seed: 20240601,
            grid_size: 1024,
            sde_steps: 1000,
            null_runs: 100,
            null_quantile: 0.99,
            hydro_replicas: 200,
            clt_replicas: 2000,
            reference_paths: 100_000,
            qv_tolerance: 0.05,
            frame_factor: 2.0,
            replacement_replicas: 200,
            replacement_density: 1.0,
            probe: ReplacementProbe {
                observable: OriginObservable::PerParticleRate,
                l: 5,
                eps_inner: 0.1,
                eps_outer: 0.1,
            },
            asymmetric_pair: (0.05, 0.1),
            swap_tolerance: 0.2,
            ensemble_l: (4, 8),
            ensemble_ratio: 0.7,
            gap_l_max: 3,
            gap_j_max: 12,
            gap_trend_l: 2,
            gap_exponent_range: (-3.0, -1.0),
            invariance_n: 64,
            invariance_horizon: 0.5,
            invariance_densities: vec![0.5, 1.0, 2.0],
            invariance_seeds: 20,
            invariance_replicas: 32,
            invariance_p_min: 0.001,
            invariance_min_pass: 18,
        }
    }
}
