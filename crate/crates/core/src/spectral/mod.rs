//! Generators of the zero-range dynamics restricted to finite windows with
//! a fixed particle number, their Dirichlet forms and spectral gaps.
//!
//! State indices are those of [`CanonicalSpace`]. Gaps are computed on the
//! symmetrisation `D^{1/2} Q D^{-1/2}` by the reversible weights `D`.

mod eigen;
mod lemmas;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::measures::{state_count, CanonicalSpace, MeasureError, ENUMERATION_CAP};
use crate::model::{JumpKernel, RateFunction};

pub use eigen::{dense_spectrum, lanczos_smallest, SymSparse, DENSE_LIMIT, LANCZOS_TOL, MAX_ITERATIONS};
pub use lemmas::{claim_l1_table, fit_gap_exponent, verify_gap_lemmas, ClaimRow, GapRow, LemmaReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("state space of {states} configurations exceeds the enumeration cap {cap}")]
    StateSpaceTooLarge { states: u64, cap: usize },
    #[error("generator is not irreducible: {reached} of {states} states reachable")]
    NotIrreducible { reached: usize, states: usize },
    #[error("eigensolver did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },
    #[error("invalid generator request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Sites and directed jump weights of a finite window.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// `Lambda_l = {-l, ..., l}` with the kernel restricted to it.
    Cube { l: usize },
    /// `Lambda_l^- U Lambda_l^+`, two blocks of `2l+1` sites joined by one
    /// edge between their facing endpoints carrying rate weight `1/2`.
    TwoBlock { l: usize },
}

impl Region {
    pub fn n_sites(&self) -> usize {
        match *self {
            Region::Cube { l } => 2 * l + 1,
            Region::TwoBlock { l } => 2 * (2 * l + 1),
        }
    }

    pub fn l(&self) -> usize {
        match *self {
            Region::Cube { l } | Region::TwoBlock { l } => l,
        }
    }

    /// Index of the distinguished site for the environment process.
    pub fn origin(&self) -> usize {
        match *self {
            Region::Cube { l } => l,
            Region::TwoBlock { l } => 2 * l,
        }
    }

    /// `weights[x]` lists `(y, p)` for jumps `x -> y`.
    fn weights(&self, p: &JumpKernel) -> Vec<Vec<(usize, f64)>> {
        let within = |lo: usize, hi: usize, out: &mut Vec<Vec<(usize, f64)>>| {
            for x in lo..hi {
                for (&z, &q) in p.offsets().iter().zip(p.probabilities()) {
                    let y = x as i64 + z;
                    if y >= lo as i64 && y < hi as i64 {
                        out[x].push((y as usize, q));
                    }
                }
            }
        };
        let n = self.n_sites();
        let mut out = vec![Vec::new(); n];
        match *self {
            Region::Cube { .. } => within(0, n, &mut out),
            Region::TwoBlock { l } => {
                let s = 2 * l + 1;
                within(0, s, &mut out);
                within(s, n, &mut out);
                out[s - 1].push((s, 0.5));
                out[s].push((s - 1, 0.5));
            }
        }
        out
    }
}

/// A canonical-space generator stored as off-diagonal rates per row.
#[derive(Debug, Clone)]
pub struct CanonicalGenerator {
    region: Region,
    env: bool,
    space: CanonicalSpace,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMethod {
    Trivial,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub l: usize,
    pub j: u32,
    pub states: usize,
    pub env: bool,
    /// Smallest nonzero eigenvalue of `-Q`; zero for a single state.
    pub lambda2: f64,
    /// `1/lambda2`, defined as zero on a single state.
    pub w: f64,
    pub method: GapMethod,
    pub iterations: usize,
}

/// The restriction of the bulk generator (`env = false`, on
/// `Sigma_{Lambda_l, j}`) or of the environment generator (`env = true`, on
/// `Sigma*_{Lambda_l, j}`) to the cube `Lambda_l`.
pub fn build_generator(g: &RateFunction, p: &JumpKernel, l: usize, j: u32, env: bool) -> Result<CanonicalGenerator, SpectralError> {
    build_generator_on(g, p, Region::Cube { l }, j, env)
}

pub fn build_generator_on(
    g: &RateFunction,
    p: &JumpKernel,
    region: Region,
    j: u32,
    env: bool,
) -> Result<CanonicalGenerator, SpectralError> {
    if env && !matches!(region, Region::Cube { .. }) {
        return Err(SpectralError::Invalid("the environment generator lives on a cube".into()));
    }
    if env && j == 0 {
        return Err(SpectralError::Invalid("the environment space needs j >= 1".into()));
    }
    let n = region.n_sites();
    let count = state_count(n, j, env);
    if count > ENUMERATION_CAP as f64 {
        return Err(SpectralError::StateSpaceTooLarge { states: count as u64, cap: ENUMERATION_CAP });
    }
    let space = CanonicalSpace::on_sites(g, n, region.origin(), j, env)?;
    let weights = region.weights(p);
    let origin = region.origin();
    let mut row_ptr = Vec::with_capacity(space.len() + 1);
    let mut cols = Vec::new();
    let mut rates = Vec::new();
    let mut exit = Vec::with_capacity(space.len());
    let mut buf = vec![0u32; n];
    row_ptr.push(0);
    for i in 0..space.len() {
        let eta = space.state(i);
        let mut out = 0.0;
        for x in 0..n {
            let k = eta[x];
            if k == 0 {
                continue;
            }
            let mut base = g.eval(k as u64);
            if env && x == origin {
                // environment particles leave the origin; the tagged one stays
                base *= (k - 1) as f64 / k as f64;
            }
            if base == 0.0 {
                continue;
            }
            for &(y, q) in &weights[x] {
                buf.copy_from_slice(eta);
                buf[x] -= 1;
                buf[y] += 1;
                let t = space.index_of(&buf).expect("jumps stay in the canonical space");
                cols.push(t);
                rates.push(base * q);
                out += base * q;
            }
        }
        exit.push(out);
        row_ptr.push(cols.len());
    }
    Ok(CanonicalGenerator { region, env, space, row_ptr, cols, rates, exit })
}

impl CanonicalGenerator {
    pub fn space(&self) -> &CanonicalSpace {
        &self.space
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn is_env(&self) -> bool {
        self.env
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Normalised reversible weights (the canonical measure).
    pub fn reversible_weights(&self) -> &[f64] {
        self.space.weights()
    }

    /// `(column, rate)` pairs of row `i`, diagonal excluded.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.rates[r].iter().copied())
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// `(Q f)(i) = sum_j q_ij (f_j - f_i)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i).map(|(j, q)| q * (f[j] - f[i])).sum()).collect()
    }

    /// Dense generator with rows summing to zero.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, q) in self.row(i) {
                m[(i, j)] += q;
            }
            m[(i, i)] -= self.exit[i];
        }
        m
    }

    /// Largest detailed-balance defect `|w_i q_ij - w_j q_ji|`.
    pub fn detailed_balance_defect(&self) -> f64 {
        let w = self.space.weights();
        let rate = |i: usize, j: usize| self.row(i).filter(|&(c, _)| c == j).map(|(_, q)| q).sum::<f64>();
        let mut worst = 0.0_f64;
        for i in 0..self.len() {
            for (j, q) in self.row(i) {
                worst = worst.max((w[i] * q - w[j] * rate(j, i)).abs());
            }
        }
        worst
    }

    fn check_irreducible(&self) -> Result<(), SpectralError> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.row(i) {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        if reached == n {
            Ok(())
        } else {
            Err(SpectralError::NotIrreducible { reached, states: n })
        }
    }

    /// `-D^{1/2} Q D^{-1/2}`, positive semidefinite with null vector
    /// `sqrt(w)`.
    pub fn symmetrized(&self) -> SymSparse {
        let w = self.space.weights();
        let n = self.len();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            cols.push(i);
            vals.push(self.exit[i]);
            for (j, q) in self.row(i) {
                cols.push(j);
                vals.push(-q * (w[i] / w[j]).sqrt());
            }
            row_ptr.push(cols.len());
        }
        SymSparse { n, row_ptr, cols, vals }
    }
}

/// Spectral gap with the default method: dense up to [`DENSE_LIMIT`]
/// states, Lanczos above.
pub fn spectral_gap(genr: &CanonicalGenerator) -> Result<GapReport, SpectralError> {
    let method = match genr.len() {
        0 | 1 => GapMethod::Trivial,
        n if n <= DENSE_LIMIT => GapMethod::Dense,
        _ => GapMethod::Lanczos,
    };
    spectral_gap_with(genr, method)
}

pub fn spectral_gap_with(genr: &CanonicalGenerator, method: GapMethod) -> Result<GapReport, SpectralError> {
    let report = |lambda2: f64, method, iterations| GapReport {
        l: genr.region.l(),
        j: genr.space.particles(),
        states: genr.len(),
        env: genr.env,
        lambda2,
        w: if lambda2 > 0.0 { 1.0 / lambda2 } else { 0.0 },
        method,
        iterations,
    };
    if genr.len() <= 1 {
        return Ok(report(0.0, GapMethod::Trivial, 0));
    }
    genr.check_irreducible()?;
    let a = genr.symmetrized();
    match method {
        GapMethod::Trivial => Err(SpectralError::Invalid("trivial method on a non-trivial space".into())),
        GapMethod::Dense => {
            let ev = dense_spectrum(&a);
            Ok(report(ev[1], GapMethod::Dense, 0))
        }
        GapMethod::Lanczos => {
            let mut null: Vec<f64> = genr.space.weights().iter().map(|w| w.sqrt()).collect();
            let norm = null.iter().map(|v| v * v).sum::<f64>().sqrt();
            null.iter_mut().for_each(|v| *v /= norm);
            let (lambda, iterations) = lanczos_smallest(&a, &null, genr.len() as u64)?;
            Ok(report(lambda, GapMethod::Lanczos, iterations))
        }
    }
}

/// `<f, -Q f>` in the reversible inner product.
pub fn dirichlet_form(genr: &CanonicalGenerator, f: &[f64]) -> f64 {
    let w = genr.space.weights();
    let qf = genr.apply(f);
    -w.iter().zip(f).zip(qf).map(|((w, f), q)| w * f * q).sum::<f64>()
}

/// `(1/2) sum_{i,j} w_i q_ij (f_j - f_i)^2`.
pub fn dirichlet_form_half_sum(genr: &CanonicalGenerator, f: &[f64]) -> f64 {
    let w = genr.space.weights();
    0.5 * (0..genr.len()).map(|i| genr.row(i).map(|(j, q)| w[i] * q * (f[j] - f[i]).powi(2)).sum::<f64>()).sum::<f64>()
}

/// Variance of `f` under the reversible weights.
pub fn variance(genr: &CanonicalGenerator, f: &[f64]) -> f64 {
    let w = genr.space.weights();
    let mean: f64 = w.iter().zip(f).map(|(w, f)| w * f).sum();
    w.iter().zip(f).map(|(w, f)| w * (f - mean).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn nn() -> JumpKernel {
        JumpKernel::nearest_neighbor()
    }

    #[test]
    fn hand_values() {
        let g = RateFunction::unit();
        let bulk = build_generator(&g, &nn(), 1, 1, false).unwrap();
        assert_eq!(bulk.len(), 3);
        assert!((spectral_gap(&bulk).unwrap().w - 2.0).abs() < 1e-10);
        let env = build_generator(&g, &nn(), 1, 2, true).unwrap();
        assert_eq!(env.len(), 3);
        assert!((spectral_gap(&env).unwrap().w - 2.0).abs() < 1e-10);
        // single state: W defined as zero
        let one = build_generator(&g, &nn(), 2, 1, true).unwrap();
        assert_eq!(spectral_gap(&one).unwrap().w, 0.0);
    }

    #[test]
    fn rows_sum_to_zero_and_balance() {
        for g in [RateFunction::unit(), RateFunction::power(0.5).unwrap()] {
            for env in [false, true] {
                let genr = build_generator(&g, &nn(), 2, 4, env).unwrap();
                let d = genr.to_dense();
                for i in 0..genr.len() {
                    assert!(d.row(i).sum().abs() < 1e-12);
                }
                assert!(genr.detailed_balance_defect() < 1e-10);
                // the canonical measure is stationary: w Q = 0
                let w = nalgebra::DVector::from_column_slice(genr.reversible_weights());
                assert!((d.transpose() * w).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn dirichlet_form_hand_sum() {
        // indicator of the middle state of the three-state path: edges of
        // rate 1/2 to both neighbours, weights 1/3 each
        let genr = build_generator(&RateFunction::unit(), &nn(), 1, 1, false).unwrap();
        let mid = genr.space().index_of(&[0, 1, 0]).unwrap();
        let mut f = vec![0.0; 3];
        f[mid] = 1.0;
        let want = 0.5 * (4.0 * (1.0 / 3.0) * 0.5);
        assert!((dirichlet_form(&genr, &f) - want).abs() < 1e-12);
        assert!((dirichlet_form_half_sum(&genr, &f) - want).abs() < 1e-12);
        assert!(dirichlet_form(&genr, &[2.0; 3]).abs() < 1e-15);
    }

    #[test]
    fn poincare_on_random_functions() {
        let mut rng = stream(4, Purpose::Probe, 0);
        for g in [RateFunction::unit(), RateFunction::power(0.5).unwrap()] {
            for (l, j, env) in [(1, 3, false), (1, 3, true), (2, 5, false), (2, 5, true)] {
                let genr = build_generator(&g, &nn(), l, j, env).unwrap();
                let w = spectral_gap(&genr).unwrap().w;
                for _ in 0..100 {
                    let f: Vec<f64> = (0..genr.len()).map(|_| rng.random::<f64>() - 0.5).collect();
                    let d = dirichlet_form(&genr, &f);
                    assert!((d - dirichlet_form_half_sum(&genr, &f)).abs() < 1e-10);
                    assert!(variance(&genr, &f) <= w * d * (1.0 + 1e-10));
                }
            }
        }
    }

    #[test]
    fn dense_and_lanczos_agree() {
        // l = 2, j = 11: 1365 states
        let genr = build_generator(&RateFunction::unit(), &nn(), 2, 11, false).unwrap();
        assert_eq!(genr.len(), 1365);
        let d = spectral_gap_with(&genr, GapMethod::Dense).unwrap();
        let l = spectral_gap_with(&genr, GapMethod::Lanczos).unwrap();
        assert!(((d.w - l.w) / d.w).abs() < 1e-8, "{} vs {}", d.w, l.w);
    }

    #[test]
    fn single_particle_path_spectra() {
        // one particle on a path of n sites with edge rate 1/2 has gap
        // 1 - cos(pi / n); the two-block bridge has the bulk rate, so the
        // two blocks form a path of 2(2l+1) sites
        let g = RateFunction::unit();
        for l in 1..=3 {
            let cube = spectral_gap(&build_generator(&g, &nn(), l, 1, false).unwrap()).unwrap();
            let n = (2 * l + 1) as f64;
            assert!((cube.lambda2 - (1.0 - (std::f64::consts::PI / n).cos())).abs() < 1e-12);
            let two = build_generator_on(&g, &nn(), Region::TwoBlock { l }, 1, false).unwrap();
            assert!(two.detailed_balance_defect() < 1e-12);
            let gap = spectral_gap(&two).unwrap().lambda2;
            assert!((gap - (1.0 - (std::f64::consts::PI / (2.0 * n)).cos())).abs() < 1e-12);
        }
        assert!(build_generator_on(&g, &nn(), Region::TwoBlock { l: 1 }, 3, true).is_err());
    }

    #[test]
    fn too_large_rejected() {
        let r = build_generator(&RateFunction::unit(), &nn(), 10, 30, false);
        assert!(matches!(r, Err(SpectralError::StateSpaceTooLarge { .. })));
    }
}
