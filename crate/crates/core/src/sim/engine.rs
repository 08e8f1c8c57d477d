use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;

use crate::measures::HBarTable;
use crate::model::{Configuration, JumpKernel, RateFunction, TagKind};
use crate::rng::Stream;

use super::observables::{Kahan, OriginObservable};
use super::{Checkpoint, Process, TrajectoryRecord};

/// Rebuild the rate tree after this many events to shed roundoff.
const REFRESH_EVERY: u64 = 1 << 20;

struct Probe {
    table: Arc<HBarTable>,
    name: String,
    count: usize,
    radius: usize,
    sums: Vec<u64>,
    vals: Vec<f64>,
    total: f64,
    integral: Kahan,
}

impl Probe {
    fn rebuild(&mut self, occ: &[u32], origin: usize) {
        let n = occ.len();
        let at = |d: i64| occ[(origin as i64 + d).rem_euclid(n as i64) as usize] as u64;
        let r = self.radius as i64;
        let mut s: u64 = (1 - r..=1 + r).map(at).sum();
        let width = (2 * self.radius + 1) as f64;
        self.total = 0.0;
        for x in 1..=self.count as i64 {
            if x > 1 {
                s = s + at(x + r) - at(x - 1 - r);
            }
            let i = (x - 1) as usize;
            self.sums[i] = s;
            self.vals[i] = self.table.eval(s as f64 / width);
            self.total += self.vals[i];
        }
    }

    /// Occupation at frame site `d` changed by one.
    #[inline]
    fn update(&mut self, d: usize, n: usize, up: bool) {
        let (k, r) = (self.count, self.radius);
        let (lo, hi) = if k + 2 * r < n {
            // signed frame coordinate within the covered region
            let s = if d > k + r { d as i64 - n as i64 } else { d as i64 };
            let lo = (s - r as i64).max(1);
            let hi = (s + r as i64).min(k as i64);
            if lo > hi {
                return;
            }
            (lo as usize, hi as usize)
        } else {
            (1, k)
        };
        let width = (2 * r + 1) as f64;
        for x in lo..=hi {
            if k + 2 * r >= n && (d + n + r - x % n) % n > 2 * r {
                continue;
            }
            let i = x - 1;
            if up {
                self.sums[i] += 1;
            } else {
                self.sums[i] -= 1;
            }
            let v = self.table.eval(self.sums[i] as f64 / width);
            self.total += v - self.vals[i];
            self.vals[i] = v;
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.total / self.count as f64
    }
}

pub(super) struct Engine<'a> {
    process: Process,
    g: &'a RateFunction,
    kernel: &'a JumpKernel,
    sigma2: f64,
    n: usize,
    occ: Vec<u32>,
    tree: super::RateTree,
    tag: usize,
    unwrapped: i64,
    observables: &'a [OriginObservable],
    obs_vals: Vec<f64>,
    obs_int: Vec<Kahan>,
    qv_rate: f64,
    qv: Kahan,
    probes: Vec<Probe>,
    tag_jumps: BTreeMap<i64, u64>,
    events: u64,
}

impl<'a> Engine<'a> {
    pub(super) fn new(
        process: Process,
        g: &'a RateFunction,
        kernel: &'a JumpKernel,
        observables: &'a [OriginObservable],
        probes: Vec<(String, Arc<HBarTable>, usize, usize)>,
        init: Configuration,
    ) -> Self {
        let n = init.n_sites();
        let tag = init.tag().map_or(0, |t| t.position);
        debug_assert_eq!(
            init.tag().map(|t| t.kind),
            match process {
                Process::Bulk => None,
                Process::Tagged => Some(TagKind::Tagged),
                Process::SecondClass => Some(TagKind::SecondClass),
            }
        );
        let occ = init.occupancy().to_vec();
        let tree = super::RateTree::new(&vec![0.0; n]);
        let probes = probes
            .into_iter()
            .map(|(name, table, count, radius)| Probe {
                table,
                name,
                count,
                radius,
                sums: vec![0; count],
                vals: vec![0.0; count],
                total: 0.0,
                integral: Kahan::default(),
            })
            .collect();
        let mut e = Self {
            process,
            g,
            kernel,
            sigma2: kernel.sigma2(),
            n,
            occ,
            tree,
            tag,
            unwrapped: 0,
            observables,
            obs_vals: vec![0.0; observables.len()],
            obs_int: vec![Kahan::default(); observables.len()],
            qv_rate: 0.0,
            qv: Kahan::default(),
            probes,
            tag_jumps: BTreeMap::new(),
            events: 0,
        };
        let rates: Vec<f64> = (0..n).map(|x| e.site_rate(x)).collect();
        e.tree = super::RateTree::new(&rates);
        e.refresh_origin();
        let (occ, tag) = (&e.occ, e.tag);
        e.probes.iter_mut().for_each(|p| p.rebuild(occ, tag));
        e
    }

    #[inline]
    fn site_rate(&self, x: usize) -> f64 {
        match self.process {
            Process::SecondClass if x == self.tag => 1.0,
            Process::SecondClass => f64::from(self.occ[x] >= 1),
            _ => self.g.eval(self.occ[x] as u64),
        }
    }

    /// Recompute the integrands that depend on the frame-origin occupation.
    #[inline]
    fn refresh_origin(&mut self) {
        let k = self.occ[self.tag];
        for (v, o) in self.obs_vals.iter_mut().zip(self.observables) {
            *v = o.eval(self.g, k);
        }
        self.qv_rate = match self.process {
            Process::Bulk => 0.0,
            Process::Tagged => self.sigma2 * self.g.per_particle(k as u64),
            Process::SecondClass => self.sigma2 * f64::from(k == 0),
        };
    }

    #[inline]
    fn integrate(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        self.qv.add(self.qv_rate * dt);
        for (acc, v) in self.obs_int.iter_mut().zip(&self.obs_vals) {
            acc.add(v * dt);
        }
        for p in &mut self.probes {
            p.integral.add(p.value() * dt);
        }
    }

    #[inline]
    fn wrap(&self, x: usize, z: i64) -> usize {
        (x as i64 + z).rem_euclid(self.n as i64) as usize
    }

    /// Move one particle between sites that are not the frame origin's
    /// tagged particle.
    #[inline]
    fn hop(&mut self, from: usize, to: usize) {
        self.occ[from] -= 1;
        self.occ[to] += 1;
        self.tree.set(from, self.site_rate(from));
        self.tree.set(to, self.site_rate(to));
        if from == self.tag || to == self.tag {
            self.refresh_origin();
        }
        if !self.probes.is_empty() {
            let n = self.n;
            let (df, dt) = ((from + n - self.tag) % n, (to + n - self.tag) % n);
            for p in &mut self.probes {
                p.update(df, n, false);
                p.update(dt, n, true);
            }
        }
    }

    fn move_tag(&mut self, to: usize, z: i64) {
        let from = self.tag;
        self.tag = to;
        self.unwrapped += z;
        *self.tag_jumps.entry(z).or_insert(0) += 1;
        self.tree.set(from, self.site_rate(from));
        self.tree.set(to, self.site_rate(to));
        self.refresh_origin();
        let (occ, tag) = (&self.occ, self.tag);
        self.probes.iter_mut().for_each(|p| p.rebuild(occ, tag));
    }

    fn event(&mut self, rng: &mut Stream) {
        let target = rng.random::<f64>() * self.tree.total();
        let x = self.tree.select(target);
        let z = self.kernel.sample(rng);
        let y = self.wrap(x, z);
        match self.process {
            Process::Bulk => self.hop(x, y),
            Process::Tagged => {
                let k = self.occ[x];
                if x == self.tag && rng.random::<f64>() * (k as f64) < 1.0 {
                    // the tagged particle jumps and carries the frame
                    self.occ[x] -= 1;
                    self.occ[y] += 1;
                    self.move_tag(y, z);
                } else {
                    self.hop(x, y);
                }
            }
            Process::SecondClass => {
                if x == self.tag && self.occ[x] == 0 {
                    self.move_tag(y, z);
                } else {
                    debug_assert!(self.occ[x] >= 1);
                    self.hop(x, y);
                }
            }
        }
        self.events += 1;
        if self.events % REFRESH_EVERY == 0 {
            self.tree.refresh();
        }
    }

    fn frame_profile(&self) -> Vec<u32> {
        match self.process {
            Process::Bulk => self.occ.clone(),
            _ => (0..self.n).map(|d| self.occ[(self.tag + d) % self.n]).collect(),
        }
    }

    /// Advance to each microscopic time in `stops` and record.
    pub(super) fn run(mut self, stops: &[(f64, f64)], rng: &mut Stream, replica: u64) -> TrajectoryRecord {
        let scale = (self.n * self.n) as f64;
        let mut tau = 0.0;
        let mut checkpoints = Vec::with_capacity(stops.len());
        for &(t_macro, stop) in stops {
            loop {
                let total = self.tree.total();
                if total <= 0.0 {
                    self.integrate(stop - tau);
                    tau = stop;
                    break;
                }
                let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
                if tau + wait >= stop {
                    // memorylessness lets the clock restart at the stop
                    self.integrate(stop - tau);
                    tau = stop;
                    break;
                }
                self.integrate(wait);
                tau += wait;
                self.event(rng);
            }
            #[cfg(debug_assertions)]
            for p in &self.probes {
                let mut fresh = Probe { sums: p.sums.clone(), vals: p.vals.clone(), name: String::new(), table: p.table.clone(), ..*p };
                fresh.rebuild(&self.occ, self.tag);
                debug_assert_eq!(fresh.sums, p.sums, "incremental window sums drifted");
                debug_assert!((fresh.total - p.total).abs() < 1e-9 * (1.0 + p.total.abs()));
            }
            let mut integrals: BTreeMap<String, f64> = BTreeMap::new();
            for (o, acc) in self.observables.iter().zip(&self.obs_int) {
                integrals.insert(o.name(), acc.value() / scale);
            }
            for p in &self.probes {
                integrals.insert(p.name.clone(), p.integral.value() / scale);
            }
            checkpoints.push(Checkpoint {
                t: t_macro,
                position: self.unwrapped,
                qv: self.qv.value() / scale,
                profile: self.frame_profile(),
                integrals,
            });
        }
        TrajectoryRecord {
            replica,
            process: self.process,
            n_sites: self.n,
            total_particles: self.occ.iter().map(|&c| c as u64).sum(),
            events: self.events,
            tag_jumps: self.tag_jumps,
            checkpoints,
        }
    }
}

/// Outcome of a basic-coupling run of two bulk systems.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOutcome {
    pub events: u64,
    pub ordered: bool,
    pub violations: u64,
    pub lower: Vec<u32>,
    pub upper: Vec<u32>,
}

/// Runs `lower <= upper` under the basic coupling for microscopic time
/// `horizon`: site `x` fires at rate `max(g(lower_x), g(upper_x))`, both
/// systems move with probability `g(min)/g(max)`, otherwise only the larger.
pub fn run_coupled(
    g: &RateFunction,
    kernel: &JumpKernel,
    lower: &[u32],
    upper: &[u32],
    horizon: f64,
    rng: &mut Stream,
) -> CoupledOutcome {
    let n = lower.len();
    assert_eq!(n, upper.len(), "coupled systems must share the torus");
    let mut a = lower.to_vec();
    let mut b = upper.to_vec();
    let rate = |a: u32, b: u32| g.eval(a as u64).max(g.eval(b as u64));
    let rates: Vec<f64> = (0..n).map(|x| rate(a[x], b[x])).collect();
    let mut tree = super::RateTree::new(&rates);
    let mut ordered = a.iter().zip(&b).all(|(x, y)| x <= y);
    let mut violations = 0;
    let mut tau = 0.0;
    let mut events = 0;
    loop {
        let total = tree.total();
        if total <= 0.0 {
            break;
        }
        tau += rng.sample::<f64, _>(Exp1) / total;
        if tau >= horizon {
            break;
        }
        let x = tree.select(rng.random::<f64>() * total);
        let z = kernel.sample(rng);
        let y = (x as i64 + z).rem_euclid(n as i64) as usize;
        let (ga, gb) = (g.eval(a[x] as u64), g.eval(b[x] as u64));
        let u: f64 = rng.random::<f64>() * ga.max(gb);
        if u < ga.min(gb) {
            a[x] -= 1;
            a[y] += 1;
            b[x] -= 1;
            b[y] += 1;
        } else if ga > gb {
            a[x] -= 1;
            a[y] += 1;
        } else {
            b[x] -= 1;
            b[y] += 1;
        }
        for s in [x, y] {
            tree.set(s, rate(a[s], b[s]));
            if a[s] > b[s] {
                ordered = false;
                violations += 1;
            }
        }
        events += 1;
    }
    CoupledOutcome { events, ordered, violations, lower: a, upper: b }
}
