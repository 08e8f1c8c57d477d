use std::collections::HashMap;

use crate::model::RateFunction;

use super::ensemble::{fugacity_of_density, GrandCanonical, TAIL_TOL};
use super::tables::{MarginalKind, MarginalTable};
use super::MeasureError;

const GRID_STEP: f64 = 0.01;

/// `Hbar_l(rho) = E_{mu_rho}[H(eta^l(0))]` on a density grid, where
/// `H(r) = E[h(eta(0))]` under the size-biased origin law at density `r`.
///
/// The window mean `eta^l(0)` is the sum of `2l+1` independent
/// grand-canonical marginals divided by `2l+1`; its law is obtained by
/// repeated convolution.
#[derive(Debug, Clone)]
pub struct HBarTable {
    l: usize,
    values: Vec<f64>,
}

impl HBarTable {
    pub fn new(
        g: &RateFunction,
        l: usize,
        rho_max: f64,
        origin_kind: MarginalKind,
        h: impl Fn(u64) -> f64,
    ) -> Result<Self, MeasureError> {
        let width = 2 * l + 1;
        let nodes = (rho_max / GRID_STEP).ceil() as usize + 1;
        let mut inner: HashMap<usize, f64> = HashMap::new();
        let mut inner_h = |s: usize| -> Result<f64, MeasureError> {
            if let Some(&v) = inner.get(&s) {
                return Ok(v);
            }
            let t = MarginalTable::new(g, s as f64 / width as f64, origin_kind)?;
            let v = t.expect(&h);
            inner.insert(s, v);
            Ok(v)
        };
        let mut values = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let rho = i as f64 * GRID_STEP;
            if rho == 0.0 {
                values.push(inner_h(0)?);
                continue;
            }
            let phi = fugacity_of_density(g, rho, 1e-12)?;
            let site = GrandCanonical::at_fugacity(g, phi, TAIL_TOL)?;
            let mut law = vec![1.0];
            for _ in 0..width {
                law = convolve(&law, site.pmf());
                trim_tail(&mut law, 1e-15);
            }
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (s, p) in law.iter().enumerate() {
                acc += p * inner_h(s)?;
                mass += p;
            }
            values.push(acc / mass);
        }
        Ok(Self { l, values })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn rho_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * GRID_STEP
    }

    /// Linear interpolation; constant beyond the grid.
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let x = rho.max(0.0) / GRID_STEP;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn trim_tail(law: &mut Vec<f64>, tol: f64) {
    let mut tail = 0.0;
    while law.len() > 1 {
        let last = *law.last().unwrap();
        if tail + last > tol {
            break;
        }
        tail += last;
        law.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_observable() {
        let t = HBarTable::new(&RateFunction::unit(), 2, 3.0, MarginalKind::Palm, |_| 0.4).unwrap();
        for i in 0..30 {
            assert!((t.eval(0.1 * i as f64) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn l_zero_brute_force() {
        // l = 0: Hbar_0(rho) = sum_k mu_rho(k) H(k)
        let g = RateFunction::unit();
        let h = |k: u64| if k == 0 { 0.0 } else { 1.0 / k as f64 };
        let t = HBarTable::new(&g, 0, 2.0, MarginalKind::Palm, h).unwrap();
        let rho = 0.7;
        let mu = MarginalTable::grand_canonical(&g, rho).unwrap();
        let oracle: f64 = (0..mu.probabilities().len())
            .map(|k| mu.prob(k) * MarginalTable::palm(&g, k as f64).unwrap().expect(h))
            .sum();
        assert!((t.eval(rho) - oracle).abs() < 1e-10, "{} vs {oracle}", t.eval(rho));
    }

    #[test]
    fn large_window_approaches_h() {
        // as l grows the window mean concentrates and Hbar_l -> H = psi;
        // with H(r) = 1/(1+r) the leading correction is H''(1)/2 * Var = Var/8
        let g = RateFunction::unit();
        let h = |k: u64| if k == 0 { 0.0 } else { 1.0 / k as f64 };
        let small = HBarTable::new(&g, 1, 2.0, MarginalKind::Palm, h).unwrap().eval(1.0);
        let big = HBarTable::new(&g, 10, 2.0, MarginalKind::Palm, h).unwrap().eval(1.0);
        assert!((big - 0.5).abs() < (small - 0.5).abs());
        let var = 2.0 / 21.0;
        assert!((big - 0.5 - var / 8.0).abs() < 3e-3, "{big}");
    }
}
