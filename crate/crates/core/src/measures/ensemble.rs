//! Grand-canonical single-site marginals `phi^k / (Z g(k)!)` and the maps
//! between density and fugacity.

use crate::model::{RateClass, RateFunction};

use super::MeasureError;

/// Relative tail mass left out of every truncated series.
pub const TAIL_TOL: f64 = 1e-14;
/// Hard cap on the truncation index.
pub const MAX_CUTOFF: usize = 1_000_000;
/// Below this density `psi` is interpolated towards `g(1)`.
pub const PSI_EPS: f64 = 1e-6;

/// Normalised marginal `mu_phi(k)`, `k = 0..=K`, with a bound on the mass
/// beyond `K`.
#[derive(Debug, Clone)]
pub struct GrandCanonical {
    phi: f64,
    z: f64,
    pmf: Vec<f64>,
    tail_mass: f64,
}

fn check_fugacity(g: &RateFunction, phi: f64) -> Result<(), MeasureError> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(MeasureError::InvalidParameter(format!("fugacity {phi}")));
    }
    if g.class() == RateClass::Bounded && phi >= g.g_infinity() * (1.0 - 1e-6) {
        return Err(MeasureError::FugacityAtRadius { phi, radius: g.g_infinity() });
    }
    Ok(())
}

impl GrandCanonical {
    /// Sum the series until the geometric tail bound drops below
    /// `tol * Z` for both the mass and the first moment.
    pub fn at_fugacity(g: &RateFunction, phi: f64, tol: f64) -> Result<Self, MeasureError> {
        check_fugacity(g, phi)?;
        if phi == 0.0 {
            return Ok(Self { phi, z: 1.0, pmf: vec![1.0], tail_mass: 0.0 });
        }
        let mut terms = vec![1.0_f64];
        let mut z = 1.0_f64;
        let mut moment = 0.0_f64;
        let mut k = 0usize;
        loop {
            let t = terms[k];
            // successive ratios phi/g(i) are non-increasing since g is
            let r = phi / g.eval(k as u64 + 1);
            if r < 1.0 {
                let mass_tail = t * r / (1.0 - r);
                let kf = k as f64;
                let moment_tail = t * (kf * r / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)));
                if mass_tail < tol * z && moment_tail < tol * z.max(moment) {
                    let pmf = terms.iter().map(|t| t / z).collect();
                    return Ok(Self { phi, z, pmf, tail_mass: mass_tail / z });
                }
            }
            if k >= MAX_CUTOFF {
                return Err(MeasureError::FugacityAtRadius { phi, radius: g.g_infinity() });
            }
            let next = t * r;
            k += 1;
            terms.push(next);
            z += next;
            moment += k as f64 * next;
            if !z.is_finite() {
                return Err(MeasureError::InvalidParameter(format!(
                    "partition function overflows at fugacity {phi}"
                )));
            }
        }
    }

    pub fn fugacity(&self) -> f64 {
        self.phi
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn cutoff(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn expect(&self, f: impl Fn(u64) -> f64) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| p * f(k as u64)).sum()
    }

    pub fn density(&self) -> f64 {
        self.expect(|k| k as f64)
    }

    pub fn variance(&self) -> f64 {
        let m = self.density();
        self.expect(|k| (k as f64 - m).powi(2))
    }
}

/// `(Z_phi, K)`: the truncated partition function and its cutoff index.
pub fn partition_function(g: &RateFunction, phi: f64, tol: f64) -> Result<(f64, usize), MeasureError> {
    let m = GrandCanonical::at_fugacity(g, phi, tol)?;
    Ok((m.z(), m.cutoff()))
}

/// Mean of the marginal at fugacity `phi`.
pub fn density_of_fugacity(g: &RateFunction, phi: f64) -> Result<f64, MeasureError> {
    Ok(GrandCanonical::at_fugacity(g, phi, TAIL_TOL)?.density())
}

/// Inverse of [`density_of_fugacity`]; equals the flux `E_{mu_rho}[g]`.
pub fn fugacity_of_density(g: &RateFunction, rho: f64, tol: f64) -> Result<f64, MeasureError> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(MeasureError::InvalidParameter(format!("density {rho}")));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let density = |phi: f64| density_of_fugacity(g, phi);
    let mut lo = 0.0_f64;
    let mut hi;
    match g.class() {
        RateClass::Bounded => {
            let radius = g.g_infinity();
            hi = 0.5 * radius;
            while density(hi)? < rho {
                lo = hi;
                hi = radius - 0.5 * (radius - hi);
                if radius - hi < radius * 1e-6 {
                    return Err(MeasureError::FugacityAtRadius { phi: hi, radius });
                }
            }
        }
        RateClass::Sublinear => {
            hi = 1.0;
            while density(hi)? < rho {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = density(mid)?;
        if (d - rho).abs() < 0.25 * tol {
            return Ok(mid);
        }
        if d < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// `phi(rho) / rho`, with `psi(0) = g(1)` and linear interpolation on
/// `(0, PSI_EPS)`.
pub fn psi(g: &RateFunction, rho: f64) -> Result<f64, MeasureError> {
    if rho >= PSI_EPS {
        return Ok(fugacity_of_density(g, rho, 1e-13 * rho.min(1.0))? / rho);
    }
    if rho < 0.0 {
        return Err(MeasureError::InvalidParameter(format!("density {rho}")));
    }
    let at_eps = fugacity_of_density(g, PSI_EPS, 1e-13 * PSI_EPS)? / PSI_EPS;
    let g1 = g.eval(1);
    Ok(g1 + (at_eps - g1) * rho / PSI_EPS)
}

/// `(1 + rho)^-2`, the second-class diffusion coefficient for unit rates.
#[inline]
pub fn chi(rho: f64) -> f64 {
    1.0 / ((1.0 + rho) * (1.0 + rho))
}

/// Density, fugacity and normalisation of one grand-canonical measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub rho: f64,
    pub phi: f64,
    pub z_phi: f64,
    pub tail_cutoff: usize,
    pub tail_mass: f64,
}

impl EnsembleParams {
    pub fn from_density(g: &RateFunction, rho: f64) -> Result<Self, MeasureError> {
        let phi = fugacity_of_density(g, rho, 1e-13)?;
        let m = GrandCanonical::at_fugacity(g, phi, TAIL_TOL)?;
        Ok(Self { rho, phi, z_phi: m.z(), tail_cutoff: m.cutoff(), tail_mass: m.tail_mass() })
    }
}
