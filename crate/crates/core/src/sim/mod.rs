//! Event-driven kinetic Monte Carlo for the bulk, tagged-frame and
//! second-class dynamics under diffusive scaling.

mod engine;
mod observables;
mod rate_tree;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hydro::DensityField;
use crate::measures::{HBarTable, MarginalKind, MeasureError, ProductKind, ProductSampler};
use crate::model::{Configuration, JumpKernel, ModelError, Profile, RateFunction, TagKind};
use crate::rng::{stream, Purpose};

pub use engine::{run_coupled, CoupledOutcome};
pub use observables::{block_densities, block_means, Kahan, OriginObservable, ReplacementProbe};
pub use rate_tree::RateTree;

/// Largest accepted macroscopic horizon.
pub const MAX_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    Bulk,
    Tagged,
    SecondClass,
}

impl Process {
    pub fn product_kind(self) -> ProductKind {
        match self {
            Process::Bulk => ProductKind::Bulk,
            Process::Tagged => ProductKind::TaggedPalmAtOrigin,
            Process::SecondClass => ProductKind::SecondClassKappa,
        }
    }

    fn origin_kind(self) -> MarginalKind {
        match self {
            Process::Bulk => MarginalKind::GrandCanonical,
            Process::Tagged => MarginalKind::Palm,
            Process::SecondClass => MarginalKind::SecondClassKappaOrigin,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("observable {0} was not registered for this run")]
    ObservableNotRegistered(String),
    #[error("record time {0} has no matching slice in the density field")]
    GridMismatch(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub process: Process,
    pub g: RateFunction,
    pub kernel: JumpKernel,
    pub n_sites: usize,
    /// Macroscopic horizon; the microscopic clock runs to `horizon * N^2`.
    pub horizon: f64,
    pub profile: Profile,
    pub seed: u64,
    /// Macroscopic checkpoint times; the horizon is always included.
    pub checkpoints: Vec<f64>,
    pub observables: Vec<OriginObservable>,
    pub probes: Vec<ReplacementProbe>,
}

impl SimulationSpec {
    pub fn new(process: Process, g: RateFunction, n_sites: usize, horizon: f64, profile: Profile, seed: u64) -> Self {
        Self {
            process,
            g,
            kernel: JumpKernel::default(),
            n_sites,
            horizon,
            profile,
            seed,
            checkpoints: Vec::new(),
            observables: Vec::new(),
            probes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.n_sites as i64 <= 2 * self.kernel.support_radius() {
            return bad(format!("N = {} must exceed twice the kernel range", self.n_sites));
        }
        if !(self.horizon >= 0.0 && self.horizon <= MAX_HORIZON) {
            return bad(format!("horizon {} outside [0, {MAX_HORIZON}]", self.horizon));
        }
        if self.checkpoints.iter().any(|&t| !(t >= 0.0 && t <= self.horizon)) {
            return bad("checkpoints must lie in [0, horizon]".into());
        }
        if self.process == Process::SecondClass && !(self.g.is_unit() && self.kernel.is_symmetric()) {
            return bad("second-class dynamics need the unit rate and a symmetric kernel".into());
        }
        for p in &self.probes {
            let r = p.inner_radius(self.n_sites);
            if 2 * r + 1 > self.n_sites || p.outer_count(self.n_sites) > self.n_sites {
                return bad(format!("probe {} does not fit on N = {}", p.name(), self.n_sites));
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated macroscopic stop times ending at the horizon.
    pub fn stop_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.checkpoints.iter().copied().chain([self.horizon]).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// State of one replica at a checkpoint. `profile` is in the natural frame
/// of the process: `xi` for bulk, `eta` (tag at index 0) for tagged and
/// `zeta` (second-class particle at index 0, not counted) for second-class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    /// Unwrapped displacement of the distinguished particle.
    pub position: i64,
    /// Macroscopic quadratic variation of `X/N`.
    pub qv: f64,
    pub profile: Vec<u32>,
    /// Macroscopic time integrals keyed by observable name.
    pub integrals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub replica: u64,
    pub process: Process,
    pub n_sites: usize,
    pub total_particles: u64,
    pub events: u64,
    /// Jumps of the distinguished particle per offset.
    pub tag_jumps: BTreeMap<i64, u64>,
    pub checkpoints: Vec<Checkpoint>,
}

impl Checkpoint {
    pub fn rescaled_position(&self, n_sites: usize) -> f64 {
        self.position as f64 / n_sites as f64
    }

    /// The profile in the lab frame `xi`, given the unwrapped displacement.
    pub fn lab_profile(&self, process: Process) -> Vec<u32> {
        let n = self.profile.len();
        match process {
            Process::Bulk => self.profile.clone(),
            _ => {
                let shift = (self.position.rem_euclid(n as i64)) as usize;
                (0..n).map(|x| self.profile[(x + n - shift) % n]).collect()
            }
        }
    }
}

impl TrajectoryRecord {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("records hold at least one checkpoint")
    }
}

/// A validated spec plus the tables shared by all its replicas.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: SimulationSpec,
    sampler: ProductSampler,
    observables: Vec<OriginObservable>,
    probes: Vec<(String, Arc<HBarTable>, usize, usize)>,
    stops: Vec<(f64, f64)>,
}

impl Simulator {
    pub fn new(spec: SimulationSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let sampler = ProductSampler::new(&spec.g, &spec.profile, spec.n_sites, spec.process.product_kind())?;
        let mut observables = spec.observables.clone();
        for p in &spec.probes {
            if !observables.contains(&p.observable) {
                observables.push(p.observable.clone());
            }
        }
        let rho_max = (4.0 * spec.profile.max()).max(2.0);
        let mut tables: Vec<(ReplacementProbe, Arc<HBarTable>)> = Vec::new();
        let mut probes = Vec::new();
        for p in &spec.probes {
            let key = |q: &ReplacementProbe| (q.observable.clone(), q.l);
            let table = match tables.iter().find(|(q, _)| key(q) == key(p)) {
                Some((_, t)) => t.clone(),
                None => {
                    let obs = p.observable.clone();
                    let g = spec.g.clone();
                    let t = Arc::new(HBarTable::new(&spec.g, p.l, rho_max, spec.process.origin_kind(), |k| {
                        obs.eval(&g, k as u32)
                    })?);
                    tables.push((p.clone(), t.clone()));
                    t
                }
            };
            probes.push((p.name(), table, p.outer_count(spec.n_sites), p.inner_radius(spec.n_sites)));
        }
        let scale = (spec.n_sites * spec.n_sites) as f64;
        let stops = spec.stop_times().into_iter().map(|t| (t, t * scale)).collect();
        Ok(Self { spec, sampler, observables, probes, stops })
    }

    pub fn spec(&self) -> &SimulationSpec {
        &self.spec
    }

    pub fn initial_configuration(&self, replica: u64) -> Configuration {
        self.sampler.sample(&mut stream(self.spec.seed, Purpose::Initial, replica))
    }

    /// One replica from the product initial law; deterministic in
    /// `(seed, replica)`.
    pub fn run(&self, replica: u64) -> TrajectoryRecord {
        self.run_from(self.initial_configuration(replica), replica).expect("sampler output matches the process")
    }

    /// One replica from a given initial configuration.
    pub fn run_from(&self, init: Configuration, replica: u64) -> Result<TrajectoryRecord, SimError> {
        if init.n_sites() != self.spec.n_sites {
            return Err(SimError::InvalidSpec(format!("configuration has {} sites", init.n_sites())));
        }
        let want = match self.spec.process {
            Process::Bulk => None,
            Process::Tagged => Some(TagKind::Tagged),
            Process::SecondClass => Some(TagKind::SecondClass),
        };
        if init.tag().map(|t| t.kind) != want {
            return Err(SimError::InvalidSpec("initial tag does not match the process".into()));
        }
        init.verify()?;
        let engine = engine::Engine::new(
            self.spec.process,
            &self.spec.g,
            &self.spec.kernel,
            &self.observables,
            self.probes.clone(),
            init,
        );
        let mut rng = stream(self.spec.seed, Purpose::Dynamics, replica);
        Ok(engine.run(&self.stops, &mut rng, replica))
    }

    /// Replicas `range` on the current worker pool, ordered by index.
    pub fn run_replicas(&self, range: std::ops::Range<u64>) -> Vec<TrajectoryRecord> {
        range.into_par_iter().map(|r| self.run(r)).collect()
    }
}

/// `|int_0^t h(eta_s(0)) ds - int_0^t probe_s ds|` at the last checkpoint.
pub fn replacement_discrepancy(record: &TrajectoryRecord, probe: &ReplacementProbe) -> Result<f64, SimError> {
    let last = record.last();
    let get = |name: String| last.integrals.get(&name).copied().ok_or(SimError::ObservableNotRegistered(name));
    let lhs = get(probe.observable.name())?;
    let rhs = get(probe.name())?;
    Ok((lhs - rhs).abs())
}

/// `L^1` distance between the block-averaged empirical density of `counts`
/// and `rho(t, . + shift)` averaged over the same blocks.
pub fn profile_distance(counts: &[u32], field: &DensityField, t: f64, shift: f64) -> Result<f64, SimError> {
    let k = field.slice_at(t).ok_or(SimError::GridMismatch(t))?;
    let n = counts.len();
    let pde: Vec<f64> = (0..n)
        .map(|x| field.interpolate(field.times()[k], x as f64 / n as f64 + shift).expect("stored slice time"))
        .collect();
    Ok(block_l1(counts, &pde))
}

/// `L^1` distance between block averages of `counts` and of the site field
/// `reference`.
pub fn block_l1(counts: &[u32], reference: &[f64]) -> f64 {
    let n = counts.len() as f64;
    let blocks = block_densities(counts);
    let refs = block_means(reference);
    blocks.iter().zip(refs).map(|(&(_, len, d), r)| len as f64 / n * (d - r).abs()).sum()
}

/// Checkpoint-averaged [`profile_distance`], shifting by `shift` at every
/// checkpoint.
pub fn empirical_vs_profile_distance(record: &TrajectoryRecord, field: &DensityField, shift: f64) -> Result<f64, SimError> {
    let mut acc = 0.0;
    for c in &record.checkpoints {
        acc += profile_distance(&c.profile, field, c.t, shift)?;
    }
    Ok(acc / record.checkpoints.len() as f64)
}
