//! Explicit conservative solver for `d_t rho = (sigma^2 / 2) d_uu phi(rho)`
//! on the unit torus, with `sigma^2 = sum_z z^2 p(z)`. The factor `1/2` is
//! the one produced by the zero-range generator under diffusive scaling.

use std::io::{BufRead, Write};

use crate::measures::{Flux, MeasureError};
use crate::model::{Profile, RateFunction};

#[derive(Debug, thiserror::Error)]
pub enum HydroError {
    #[error("time step {dt} violates the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("negative density {value} at node {node}, t = {t}")]
    NegativeDensity { node: usize, t: f64, value: f64 },
    #[error("time {t} outside the solved horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Space-time density on a uniform periodic grid `u_i = i/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid_size: usize,
    dt: f64,
    sigma2: f64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HydroSpec {
    pub sigma2: f64,
    pub horizon: f64,
    pub grid_size: usize,
    /// `None` selects `0.4 du^2 / (sigma^2 max(a2, 1))`.
    pub dt: Option<f64>,
    /// Times that must be stored exactly, in addition to the snapshots.
    pub checkpoints: Vec<f64>,
    /// Number of evenly spaced stored slices on `[0, horizon]`.
    pub snapshots: usize,
}

impl HydroSpec {
    pub fn new(sigma2: f64, horizon: f64, grid_size: usize) -> Self {
        Self { sigma2, horizon, grid_size, dt: None, checkpoints: Vec::new(), snapshots: 1000 }
    }
}

/// Flux spline covering `[0, 4 sup rho0]`.
pub fn flux_for_profile(g: &RateFunction, profile: &Profile) -> Result<Flux, MeasureError> {
    Flux::new(g, (4.0 * profile.max()).max(1.0))
}

pub fn default_dt(g: &RateFunction, sigma2: f64, grid_size: usize) -> f64 {
    let du = 1.0 / grid_size as f64;
    0.4 * du * du / (sigma2 * g.a2().max(1.0))
}

pub fn solve(profile: &Profile, flux: &Flux, spec: &HydroSpec) -> Result<DensityField, HydroError> {
    let m = spec.grid_size;
    if m < 3 {
        return Err(HydroError::Invalid(format!("grid size {m}")));
    }
    if !(spec.horizon >= 0.0 && spec.sigma2 > 0.0) {
        return Err(HydroError::Invalid("horizon and sigma2 must be positive".into()));
    }
    let du = 1.0 / m as f64;
    let lip = flux.lipschitz();
    let bound = du * du / (spec.sigma2 * lip);
    let dt = spec.dt.unwrap_or(0.4 * du * du / (spec.sigma2 * lip.max(1.0)));
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(HydroError::CflViolation { dt, bound });
    }

    let slices = spec.snapshots.max(1);
    let mut targets: Vec<f64> = (0..=slices)
        .map(|i| if i == slices { spec.horizon } else { spec.horizon * i as f64 / slices as f64 })
        .chain(spec.checkpoints.iter().copied())
        .filter(|t| (0.0..=spec.horizon).contains(t))
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * spec.horizon.max(1.0));

    let mut rho: Vec<f64> = (0..m).map(|i| profile.eval(i as f64 * du)).collect();
    if let Some((i, &v)) = rho.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(HydroError::NegativeDensity { node: i, t: 0.0, value: v });
    }
    let mut phi = vec![0.0; m];
    let mut times = Vec::with_capacity(targets.len());
    let mut values = Vec::with_capacity(targets.len());
    let mut t = 0.0_f64;
    for &target in &targets {
        while t < target {
            let h = if target - t < dt * (1.0 + 1e-9) { target - t } else { dt };
            step(&mut rho, &mut phi, flux, 0.5 * spec.sigma2 * h / (du * du));
            t = if h == target - t { target } else { t + h };
        }
        if let Some((i, &v)) = rho.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(HydroError::NegativeDensity { node: i, t, value: v });
        }
        times.push(target);
        values.push(rho.clone());
    }
    Ok(DensityField { grid_size: m, dt, sigma2: spec.sigma2, times, values })
}

#[inline]
fn step(rho: &mut [f64], phi: &mut [f64], flux: &Flux, lambda: f64) {
    let m = rho.len();
    for (p, &r) in phi.iter_mut().zip(rho.iter()) {
        *p = flux.phi(r);
    }
    rho[0] += lambda * (phi[1] - 2.0 * phi[0] + phi[m - 1]);
    for i in 1..m - 1 {
        rho[i] += lambda * (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]);
    }
    rho[m - 1] += lambda * (phi[0] - 2.0 * phi[m - 1] + phi[m - 2]);
}

impl DensityField {
    pub fn from_slices(times: Vec<f64>, values: Vec<Vec<f64>>, sigma2: f64) -> Result<Self, HydroError> {
        let m = values.first().map(Vec::len).unwrap_or(0);
        if times.is_empty() || times.len() != values.len() || m < 2 {
            return Err(HydroError::Invalid("empty or ragged field".into()));
        }
        if values.iter().any(|s| s.len() != m) {
            return Err(HydroError::Invalid("slices have different sizes".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || !times[0].is_finite() {
            return Err(HydroError::Invalid("times must be strictly increasing".into()));
        }
        if values.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(HydroError::Invalid("densities must be finite and non-negative".into()));
        }
        Ok(Self { grid_size: m, dt: 0.0, sigma2, times, values })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Index of a stored slice at time `t`, if any.
    pub fn slice_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.horizon().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn max_density(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.values[i].iter().sum::<f64>() / self.grid_size as f64
    }

    /// Bilinear interpolation, periodic in `u`.
    pub fn interpolate(&self, t: f64, u: f64) -> Result<f64, HydroError> {
        let (t0, t1) = (self.times[0], self.horizon());
        let tol = 1e-12 * t1.max(1.0);
        if !(t >= t0 - tol && t <= t1 + tol) {
            return Err(HydroError::OutsideHorizon { t, horizon: t1 });
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len()) - 1;
        if k + 1 == self.times.len() || self.times[k] == t {
            return Ok(self.interpolate_slice(k, u));
        }
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let w = w.clamp(0.0, 1.0);
        Ok((1.0 - w) * self.interpolate_slice(k, u) + w * self.interpolate_slice(k + 1, u))
    }

    #[inline]
    pub fn interpolate_slice(&self, k: usize, u: f64) -> f64 {
        let m = self.grid_size;
        let x = u.rem_euclid(1.0) * m as f64;
        let i = (x.floor() as usize).min(m - 1);
        let f = x - i as f64;
        let s = &self.values[k];
        if f == 0.0 {
            return s[i];
        }
        (1.0 - f) * s[i] + f * s[(i + 1) % m]
    }

    /// CSV with columns `t,u,rho`, slices in time order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,u,rho")?;
        for (t, slice) in self.times.iter().zip(&self.values) {
            for (i, r) in slice.iter().enumerate() {
                writeln!(out, "{t},{},{r}", i as f64 / self.grid_size as f64)?;
            }
        }
        Ok(())
    }

    /// Inverse of [`DensityField::write_csv`]. Rows of one time slice must be
    /// contiguous and list `u = i/M` in increasing order.
    pub fn read_csv<R: BufRead>(input: R, sigma2: f64) -> Result<Self, HydroError> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some("t,u,rho") {
            return Err(HydroError::Invalid("missing header t,u,rho".into()));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut us: Vec<f64> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || HydroError::Invalid(format!("line {}: {line:?}", lineno + 2));
            let mut it = line.split(',');
            let mut next = || -> Result<f64, HydroError> { it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad()) };
            let (t, u, r) = (next()?, next()?, next()?);
            if it.next().is_some() {
                return Err(bad());
            }
            if times.last() != Some(&t) {
                times.push(t);
                values.push(Vec::new());
            }
            let slice = values.last_mut().unwrap();
            if times.len() == 1 {
                us.push(u);
            } else if us.get(slice.len()).map(|&v| (v - u).abs() > 1e-9) != Some(false) {
                return Err(bad());
            }
            slice.push(r);
        }
        let m = us.len();
        if us.iter().enumerate().any(|(i, &u)| (u - i as f64 / m as f64).abs() > 1e-9) {
            return Err(HydroError::Invalid("u column is not the grid i/M".into()));
        }
        Self::from_slices(times, values, sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_flux(p: &Profile) -> Flux {
        flux_for_profile(&RateFunction::unit(), p).unwrap()
    }

    #[test]
    fn constant_profile_is_stationary() {
        let p = Profile::constant(1.3);
        let f = solve(&p, &unit_flux(&p), &HydroSpec::new(1.0, 0.05, 64)).unwrap();
        for k in 0..f.times().len() {
            assert!(f.slice(k).iter().all(|&v| (v - 1.3).abs() < 1e-13));
        }
    }

    #[test]
    fn sine_profile_decays_and_conserves_mass() {
        let p = Profile::sine(1.0, 0.5);
        let mut spec = HydroSpec::new(1.0, 0.1, 128);
        spec.snapshots = 10;
        let f = solve(&p, &unit_flux(&p), &spec).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..f.times().len() {
            let sup = f.slice(k).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            assert!(sup < prev || sup < 1e-14, "slice {k}");
            prev = sup;
            assert!((f.mass(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let p = Profile::constant(1.0);
        let mut spec = HydroSpec::new(1.0, 0.1, 64);
        spec.dt = Some(1.5 / (64.0 * 64.0));
        assert!(matches!(solve(&p, &unit_flux(&p), &spec), Err(HydroError::CflViolation { .. })));
    }

    #[test]
    fn small_sine_decays_at_linearised_rate() {
        // phi'(1) = 1/4 for the unit rate.
        let p = Profile::sine(1.0, 0.01);
        let mut spec = HydroSpec::new(1.0, 0.1, 256);
        spec.snapshots = 1;
        let f = solve(&p, &unit_flux(&p), &spec).unwrap();
        let amp = f.slice(1).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        let expected = 0.01 * (-0.5 * 0.25 * (2.0 * std::f64::consts::PI).powi(2) * 0.1).exp();
        assert!((amp / expected - 1.0).abs() < 2e-3, "{amp} vs {expected}");
    }

    #[test]
    fn sine_relaxes_to_mean_by_t2() {
        let p = Profile::sine(1.0, 0.5);
        let mut spec = HydroSpec::new(1.0, 2.0, 256);
        spec.snapshots = 1;
        let f = solve(&p, &unit_flux(&p), &spec).unwrap();
        assert!(f.slice(1).iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn checkpoints_are_stored_exactly() {
        let p = Profile::sine(1.0, 0.3);
        let mut spec = HydroSpec::new(1.0, 0.1, 32);
        spec.snapshots = 3;
        spec.checkpoints = vec![0.0123, 0.05];
        let f = solve(&p, &unit_flux(&p), &spec).unwrap();
        assert!(f.slice_at(0.0123).is_some());
        assert!(f.slice_at(0.05).is_some());
        assert_eq!(f.horizon(), 0.1);
    }

    #[test]
    fn interpolation_exact_on_linear_field() {
        let m = 10;
        let slice = |a: f64| (0..m).map(|i| a + i as f64).collect::<Vec<_>>();
        let f = DensityField::from_slices(vec![0.0, 1.0], vec![slice(0.0), slice(2.0)], 1.0).unwrap();
        assert_eq!(f.interpolate(0.0, 0.3).unwrap(), 3.0);
        assert!((f.interpolate(0.0, 0.35).unwrap() - 3.5).abs() < 1e-12);
        assert!((f.interpolate(0.25, 0.35).unwrap() - 4.0).abs() < 1e-12);
        // periodic wrap between the last node and u = 1
        assert!((f.interpolate(0.0, 0.95).unwrap() - 4.5).abs() < 1e-12);
        assert!((f.interpolate(0.0, -0.05).unwrap() - 4.5).abs() < 1e-12);
        assert!(f.interpolate(1.5, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = Profile::sine(1.0, 0.2);
        let mut spec = HydroSpec::new(1.0, 0.01, 16);
        spec.snapshots = 2;
        let f = solve(&p, &unit_flux(&p), &spec).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = DensityField::read_csv(&buf[..], 1.0).unwrap();
        assert_eq!(back.times(), f.times());
        for k in 0..f.times().len() {
            assert_eq!(back.slice(k), f.slice(k));
        }
    }
}
