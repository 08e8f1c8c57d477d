use crate::model::RateFunction;

use super::ensemble::{fugacity_of_density, GrandCanonical, PSI_EPS, TAIL_TOL};
use super::MeasureError;

/// Grid spacing of the flux spline.
const SPLINE_STEP: f64 = 0.01;

/// The hydrodynamic flux `phi(rho) = E_{mu_rho}[g]`, tabulated as a cubic
/// Hermite spline with exact nodal slopes `phi' = phi / Var`.
///
/// Beyond `rho_max` the spline continues linearly with the last slope.
#[derive(Debug, Clone)]
pub struct Flux {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    g1: f64,
}

impl Flux {
    pub fn new(g: &RateFunction, rho_max: f64) -> Result<Self, MeasureError> {
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(MeasureError::InvalidParameter(format!("rho_max {rho_max}")));
        }
        let nodes = (rho_max / SPLINE_STEP).ceil() as usize + 1;
        let mut values = Vec::with_capacity(nodes);
        let mut slopes = Vec::with_capacity(nodes);
        values.push(0.0);
        slopes.push(g.eval(1));
        for i in 1..nodes {
            let rho = i as f64 * SPLINE_STEP;
            let phi = fugacity_of_density(g, rho, 1e-14)?;
            let m = GrandCanonical::at_fugacity(g, phi, TAIL_TOL)?;
            values.push(phi);
            slopes.push(phi / m.variance());
        }
        Ok(Self { step: SPLINE_STEP, values, slopes, g1: g.eval(1) })
    }

    pub fn rho_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    #[inline]
    fn locate(&self, rho: f64) -> (usize, f64) {
        let x = (rho.max(0.0)) / self.step;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        (i, x - i as f64)
    }

    #[inline]
    pub fn phi(&self, rho: f64) -> f64 {
        let last = self.values.len() - 1;
        if rho >= self.rho_max() {
            return self.values[last] + self.slopes[last] * (rho - self.rho_max());
        }
        if rho <= 0.0 {
            return self.g1 * rho;
        }
        let (i, t) = self.locate(rho);
        let h = self.step;
        let (p0, p1, m0, m1) = (self.values[i], self.values[i + 1], self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }

    #[inline]
    pub fn dphi(&self, rho: f64) -> f64 {
        let last = self.values.len() - 1;
        if rho >= self.rho_max() {
            return self.slopes[last];
        }
        if rho <= 0.0 {
            return self.g1;
        }
        let (i, t) = self.locate(rho);
        let h = self.step;
        let (p0, p1, m0, m1) = (self.values[i], self.values[i + 1], self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * p0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * p1 + (3.0 * t2 - 2.0 * t) * m1)
            / h
    }

    /// `phi(rho) / rho` with the `g(1)` limit at zero.
    #[inline]
    pub fn psi(&self, rho: f64) -> f64 {
        if rho >= PSI_EPS {
            self.phi(rho) / rho
        } else {
            let at_eps = self.phi(PSI_EPS) / PSI_EPS;
            self.g1 + (at_eps - self.g1) * rho.max(0.0) / PSI_EPS
        }
    }

    /// Largest nodal slope, the Lipschitz constant entering the CFL bound.
    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ensemble::psi as psi_exact;

    #[test]
    fn unit_spline_against_closed_form() {
        let f = Flux::new(&RateFunction::unit(), 6.0).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..=60_000 {
            let rho = i as f64 * 1e-4;
            worst = worst.max((f.phi(rho) - rho / (1.0 + rho)).abs());
            let d = f.dphi(rho) - 1.0 / ((1.0 + rho) * (1.0 + rho));
            assert!(d.abs() < 1e-5, "slope at {rho}");
        }
        assert!(worst < 1e-8, "{worst}");
        assert!((f.lipschitz() - 1.0).abs() < 1e-12);
        assert!((f.psi(1.0) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn power_spline_against_root_finding() {
        let g = RateFunction::power(0.5).unwrap();
        let f = Flux::new(&g, 4.0).unwrap();
        for i in 0..200 {
            let rho = 0.0137 + i as f64 * 0.0197;
            let exact = fugacity_of_density(&g, rho, 1e-14).unwrap();
            assert!((f.phi(rho) - exact).abs() < 1e-8, "rho = {rho}");
            assert!((f.psi(rho) - psi_exact(&g, rho).unwrap()).abs() < 1e-6);
        }
        // phi' <= a2, the Lipschitz constant of g
        assert!(f.lipschitz() <= g.a2() + 1e-12);
    }
}
