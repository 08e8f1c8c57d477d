//! Euler–Maruyama integration of the limit diffusions
//! `dx = sigma sqrt(c(rho(t, x))) dB` on the unit torus.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hydro::DensityField;
use crate::measures::{chi, Flux};
use crate::rng::{stream, Purpose};

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("horizon {t} exceeds the density field horizon {field}")]
    FieldHorizonExceeded { t: f64, field: f64 },
    #[error("invalid diffusion spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coefficient {
    /// `psi(rho) = phi(rho)/rho`, the tagged-particle coefficient.
    TaggedPsi,
    /// `chi(rho) = (1 + rho)^-2`, the second-class coefficient.
    SecondClassChi,
}

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub coefficient: Coefficient,
    pub sigma2: f64,
    pub dt: f64,
    pub horizon: f64,
    pub replicas: u64,
    pub seed: u64,
    /// Recording times; rounded to the nearest step. The horizon is always
    /// recorded.
    pub checkpoints: Vec<f64>,
}

/// Positions of every path at each recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub times: Vec<f64>,
    /// `unwrapped[k][r]`: displacement of replica `r` at `times[k]`.
    pub unwrapped: Vec<Vec<f64>>,
    /// Realised quadratic variation `sum (dx)^2`.
    pub realized_qv: Vec<Vec<f64>>,
    /// `sigma^2 int c(rho(s, x_s)) ds` along each path.
    pub predicted_qv: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStatistics {
    pub mean: f64,
    pub variance: f64,
    /// Empirical CDF of the wrapped position at `(i + 1)/len`.
    pub cdf: Vec<f64>,
}

/// The coefficient as a function of density.
pub enum CoefficientFn<'a> {
    Psi(&'a Flux),
    Chi,
}

impl CoefficientFn<'_> {
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            CoefficientFn::Psi(f) => f.psi(rho).max(0.0),
            CoefficientFn::Chi => chi(rho.max(0.0)),
        }
    }
}

/// Per-step bracketing slices of the field, shared by all replicas.
struct Schedule {
    dt: f64,
    slices: Vec<(usize, usize, f64)>,
    record: Vec<usize>,
}

fn schedule(field: &DensityField, dt: f64, horizon: f64, checkpoints: &[f64]) -> Schedule {
    let steps = if horizon == 0.0 { 0 } else { (horizon / dt).ceil() as usize };
    let h = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    let times = field.times();
    let slices = (0..steps)
        .map(|j| {
            let t = j as f64 * h;
            let k = times.partition_point(|&s| s <= t).clamp(1, times.len()) - 1;
            if k + 1 == times.len() {
                (k, k, 0.0)
            } else {
                (k, k + 1, ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0))
            }
        })
        .collect();
    let mut record: Vec<usize> = checkpoints
        .iter()
        .map(|&t| if h == 0.0 { 0 } else { ((t / h).round() as usize).min(steps) })
        .chain([steps])
        .collect();
    record.sort_unstable();
    record.dedup();
    Schedule { dt: h, slices, record }
}

/// One Euler–Maruyama path driven by the given standard normal increments.
/// Returns `(unwrapped, realised qv, predicted qv)` at each recorded step.
fn path(
    field: &DensityField,
    coef: &CoefficientFn,
    sigma2: f64,
    sched: &Schedule,
    mut normals: impl FnMut() -> f64,
) -> Vec<(f64, f64, f64)> {
    let sigma = sigma2.sqrt();
    let sqdt = sched.dt.sqrt();
    let (mut x, mut qv, mut pred) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut out = Vec::with_capacity(sched.record.len());
    let mut next = 0;
    for (j, &(k0, k1, w)) in sched.slices.iter().enumerate() {
        while next < sched.record.len() && sched.record[next] == j {
            out.push((x, qv, pred));
            next += 1;
        }
        let u = x.rem_euclid(1.0);
        let rho = if w == 0.0 {
            field.interpolate_slice(k0, u)
        } else {
            (1.0 - w) * field.interpolate_slice(k0, u) + w * field.interpolate_slice(k1, u)
        };
        let c = coef.eval(rho);
        let dx = sigma * c.sqrt() * sqdt * normals();
        x += dx;
        qv += dx * dx;
        pred += sigma2 * c * sched.dt;
    }
    while next < sched.record.len() {
        out.push((x, qv, pred));
        next += 1;
    }
    out
}

pub fn integrate(spec: &DiffusionSpec, field: &DensityField, coef: &CoefficientFn) -> Result<Ensemble, DiffusionError> {
    if spec.horizon > field.horizon() * (1.0 + 1e-12) {
        return Err(DiffusionError::FieldHorizonExceeded { t: spec.horizon, field: field.horizon() });
    }
    if !(spec.horizon >= 0.0 && spec.sigma2 > 0.0 && spec.dt > 0.0) {
        return Err(DiffusionError::InvalidSpec("horizon, sigma2 and dt must be positive".into()));
    }
    if spec.horizon > 0.0 && spec.dt > 1e-3 * spec.horizon * (1.0 + 1e-12) {
        return Err(DiffusionError::InvalidSpec(format!("dt {} exceeds horizon/1000", spec.dt)));
    }
    if spec.checkpoints.iter().any(|&t| !(t >= 0.0 && t <= spec.horizon)) {
        return Err(DiffusionError::InvalidSpec("checkpoints must lie in [0, horizon]".into()));
    }
    let sched = schedule(field, spec.dt, spec.horizon, &spec.checkpoints);
    let paths: Vec<Vec<(f64, f64, f64)>> = (0..spec.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(spec.seed, Purpose::Diffusion, r);
            path(field, coef, spec.sigma2, &sched, || StandardNormal.sample(&mut rng))
        })
        .collect();
    let times: Vec<f64> = sched.record.iter().map(|&j| j as f64 * sched.dt).collect();
    let pick = |f: fn(&(f64, f64, f64)) -> f64| -> Vec<Vec<f64>> {
        (0..times.len()).map(|k| paths.iter().map(|p| f(&p[k])).collect()).collect()
    };
    Ok(Ensemble { unwrapped: pick(|p| p.0), realized_qv: pick(|p| p.1), predicted_qv: pick(|p| p.2), times })
}

impl Ensemble {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn wrapped(&self, k: usize) -> Vec<f64> {
        self.unwrapped[k].iter().map(|x| x.rem_euclid(1.0)).collect()
    }
}

/// Mean and variance of the unwrapped position, and the wrapped CDF on a
/// grid of `bins` points.
pub fn ensemble_statistics(paths: &Ensemble, t: f64, bins: usize) -> Option<EnsembleStatistics> {
    let k = paths.index_of(t)?;
    let xs = &paths.unwrapped[k];
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let mut w = paths.wrapped(k);
    w.sort_by(f64::total_cmp);
    let cdf = (1..=bins)
        .map(|i| {
            let u = i as f64 / bins as f64;
            w.partition_point(|&v| v <= u) as f64 / n
        })
        .collect();
    Some(EnsembleStatistics { mean, variance, cdf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateFunction;

    fn flat(rho: f64, horizon: f64) -> DensityField {
        DensityField::from_slices(vec![0.0, horizon], vec![vec![rho; 8], vec![rho; 8]], 1.0).unwrap()
    }

    #[test]
    fn constant_coefficient_variance() {
        let field = flat(1.0, 0.1);
        let spec = DiffusionSpec {
            coefficient: Coefficient::SecondClassChi,
            sigma2: 1.0,
            dt: 1e-4,
            horizon: 0.1,
            replicas: 100_000,
            seed: 1,
            checkpoints: vec![],
        };
        let e = integrate(&spec, &field, &CoefficientFn::Chi).unwrap();
        let s = ensemble_statistics(&e, 0.1, 50).unwrap();
        let want = 0.25 * 0.1;
        assert!((s.variance / want - 1.0).abs() < 0.02, "{}", s.variance);
        let se = (s.variance / 1e5).sqrt();
        assert!(s.mean.abs() < 4.0 * se);
        assert!(s.cdf.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*s.cdf.last().unwrap(), 1.0);
        // realised against predicted quadratic variation
        let k = e.index_of(0.1).unwrap();
        let (rq, pq): (f64, f64) = (e.realized_qv[k].iter().sum(), e.predicted_qv[k].iter().sum());
        assert!((rq / pq - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_horizon_and_single_replica() {
        let field = flat(1.0, 0.1);
        let mut spec = DiffusionSpec {
            coefficient: Coefficient::SecondClassChi,
            sigma2: 1.0,
            dt: 1e-5,
            horizon: 0.0,
            replicas: 10,
            seed: 1,
            checkpoints: vec![],
        };
        let e = integrate(&spec, &field, &CoefficientFn::Chi).unwrap();
        assert!(e.unwrapped[0].iter().all(|&x| x == 0.0));
        spec.horizon = 0.01;
        spec.replicas = 1;
        let e = integrate(&spec, &field, &CoefficientFn::Chi).unwrap();
        let s = ensemble_statistics(&e, 0.01, 10).unwrap();
        assert_eq!(s.mean, e.unwrapped[0][0]);
        spec.horizon = 0.2;
        assert!(matches!(integrate(&spec, &field, &CoefficientFn::Chi), Err(DiffusionError::FieldHorizonExceeded { .. })));
    }

    #[test]
    fn unit_rate_chi_is_psi_squared() {
        let g = RateFunction::unit();
        let f = Flux::new(&g, 10.0).unwrap();
        for i in 0..=1000 {
            let rho = i as f64 * 0.01;
            let psi = 1.0 / (1.0 + rho);
            assert!((chi(rho) - psi * psi).abs() < 1e-12);
            assert!((CoefficientFn::Psi(&f).eval(rho) - psi).abs() < 1e-7);
        }
    }

    #[test]
    fn weak_order_one() {
        // common random numbers: coarse increments are sums of fine ones;
        // a static, strongly varying field keeps the bias well above noise
        let g = RateFunction::unit();
        let flux = Flux::new(&g, 10.0).unwrap();
        let horizon = 0.2;
        let slice: Vec<f64> = (0..256).map(|i| (2.0 * (2.0 * std::f64::consts::PI * i as f64 / 256.0).sin()).exp()).collect();
        let field = DensityField::from_slices(vec![0.0, horizon], vec![slice.clone(), slice], 1.0).unwrap();
        let coef = CoefficientFn::Psi(&flux);
        let levels = [4usize, 8, 32];
        let reps = 40_000;
        let mut means = [0.0_f64; 3];
        for r in 0..reps {
            let mut rng = stream(77, Purpose::Diffusion, r);
            let fine: Vec<f64> = (0..32).map(|_| StandardNormal.sample(&mut rng)).collect();
            for (m, &steps) in levels.iter().enumerate() {
                let sched = schedule(&field, horizon / steps as f64, horizon, &[]);
                let agg = 32 / steps;
                let mut it = fine.chunks(agg).map(|c| c.iter().sum::<f64>() / (agg as f64).sqrt());
                let x = path(&field, &coef, 1.0, &sched, || it.next().unwrap()).last().unwrap().0;
                means[m] += (2.0 * std::f64::consts::PI * x).cos() / reps as f64;
            }
        }
        let (e1, e2) = (means[0] - means[2], means[1] - means[2]);
        let ratio = e1 / e2;
        // bias C dt gives (1 - 1/8) / (1/2 - 1/8) = 7/3
        assert!((1.6..3.2).contains(&ratio), "{e1} {e2} {ratio}");
    }
}
