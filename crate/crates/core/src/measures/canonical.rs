//! Canonical measures on a finite window with a fixed particle number.
//!
//! States are enumerated in colexicographic order (the last site varies
//! slowest), which fixes the state indices used by [`crate::spectral`].

use std::collections::HashMap;

use crate::model::RateFunction;

use super::ensemble::fugacity_of_density;
use super::tables::MarginalTable;
use super::MeasureError;

/// Largest state space that is enumerated explicitly.
pub const ENUMERATION_CAP: usize = 200_000;

/// `C(n, k)` as `f64` (exact while it fits in 53 bits).
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of configurations of `j` particles on `n_sites` sites, optionally
/// with the origin occupied.
pub fn state_count(n_sites: usize, j: u32, starred: bool) -> f64 {
    let n = n_sites as u64;
    if starred {
        if j == 0 {
            0.0
        } else {
            binomial(j as u64 - 1 + n - 1, n - 1)
        }
    } else {
        binomial(j as u64 + n - 1, n - 1)
    }
}

fn ln_rate_factorials(g: &RateFunction, j: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(j as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=j as u64 {
        acc += g.eval(k).ln();
        out.push(acc);
    }
    out
}

/// `Sigma_{Lambda, j}` or `Sigma*_{Lambda, j}` with the canonical weights.
#[derive(Debug, Clone)]
pub struct CanonicalSpace {
    n_sites: usize,
    origin: usize,
    j: u32,
    starred: bool,
    states: Vec<u32>,
    weights: Vec<f64>,
    index: HashMap<Vec<u32>, usize>,
}

impl CanonicalSpace {
    /// The cube `{-l, ..., l}`; the origin is local index `l`.
    pub fn cube(g: &RateFunction, l: usize, j: u32, starred: bool) -> Result<Self, MeasureError> {
        Self::on_sites(g, 2 * l + 1, l, j, starred)
    }

    /// Arbitrary site set `0..n_sites` with a designated origin.
    pub fn on_sites(g: &RateFunction, n_sites: usize, origin: usize, j: u32, starred: bool) -> Result<Self, MeasureError> {
        assert!(origin < n_sites, "origin outside the window");
        let count = state_count(n_sites, j, starred);
        if count > ENUMERATION_CAP as f64 {
            return Err(MeasureError::StateSpaceTooLarge { states: count as u64, cap: ENUMERATION_CAP });
        }
        let mut states = Vec::with_capacity(count as usize * n_sites);
        let mut buf = vec![0u32; n_sites];
        enumerate_colex(n_sites - 1, j, &mut buf, &mut |s| {
            if !starred || s[origin] >= 1 {
                states.extend_from_slice(s);
            }
        });
        let lnf = ln_rate_factorials(g, j);
        let logw: Vec<f64> = states
            .chunks_exact(n_sites)
            .map(|s| {
                let base: f64 = -s.iter().map(|&k| lnf[k as usize]).sum::<f64>();
                if starred {
                    base + (s[origin] as f64).ln()
                } else {
                    base
                }
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        let index = states
            .chunks_exact(n_sites)
            .enumerate()
            .map(|(i, s)| (s.to_vec(), i))
            .collect();
        Ok(Self { n_sites, origin, j, starred, states, weights, index })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn particles(&self) -> u32 {
        self.j
    }

    pub fn is_starred(&self) -> bool {
        self.starred
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i * self.n_sites..(i + 1) * self.n_sites]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u32]> {
        self.states.chunks_exact(self.n_sites)
    }

    pub fn index_of(&self, state: &[u32]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Normalised canonical probabilities, in state order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The same measure written through the grand-canonical product at
    /// fugacity `phi` and conditioned; independent of `phi`.
    pub fn weights_at_fugacity(&self, g: &RateFunction, phi: f64) -> Vec<f64> {
        let raw: Vec<f64> = self
            .states()
            .map(|s| {
                let prod: f64 = s
                    .iter()
                    .map(|&k| (1..=k as u64).fold(1.0, |acc, i| acc * phi / g.eval(i)))
                    .product();
                if self.starred {
                    prod * s[self.origin] as f64
                } else {
                    prod
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Law of the occupation at `site`, indexed `0..=j`.
    pub fn site_marginal(&self, site: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.j as usize + 1];
        for (s, w) in self.states().zip(&self.weights) {
            out[s[site] as usize] += w;
        }
        out
    }
}

fn enumerate_colex(pos: usize, remaining: u32, buf: &mut [u32], emit: &mut impl FnMut(&[u32])) {
    if pos == 0 {
        buf[0] = remaining;
        emit(buf);
        return;
    }
    for v in 0..=remaining {
        buf[pos] = v;
        enumerate_colex(pos - 1, remaining - v, buf, emit);
    }
}

/// Exact expectation of `observable` under the canonical measure.
pub fn canonical_expectation(space: &CanonicalSpace, observable: impl Fn(&[u32]) -> f64) -> f64 {
    space.states().zip(space.weights()).map(|(s, w)| w * observable(s)).sum()
}

/// Origin marginal of the canonical measure on `n_sites` sites with `k`
/// particles by convolution of single-site weights, without enumerating
/// states. Indexed `0..=k`.
pub fn origin_marginal_convolved(g: &RateFunction, n_sites: usize, k: u32, starred: bool) -> Result<Vec<f64>, MeasureError> {
    let k = k as usize;
    if starred && k == 0 {
        return Err(MeasureError::InvalidParameter("starred space with no particles".into()));
    }
    // scale by the fugacity at the window density to keep terms O(1)
    let rho = k as f64 / n_sites as f64;
    let phi = if rho > 0.0 { fugacity_of_density(g, rho, 1e-12)? } else { 1.0 };
    let mut w = vec![1.0_f64; k + 1];
    for m in 1..=k {
        w[m] = w[m - 1] * phi / g.eval(m as u64);
    }
    let mut rest = vec![0.0; k + 1];
    rest[0] = 1.0;
    for _ in 1..n_sites {
        let mut next = vec![0.0; k + 1];
        for (a, &ra) in rest.iter().enumerate() {
            if ra == 0.0 {
                continue;
            }
            for (b, &wb) in w[..=k - a].iter().enumerate() {
                next[a + b] += ra * wb;
            }
        }
        rest = next;
    }
    let mut out: Vec<f64> = (0..=k)
        .map(|m| {
            let base = w[m] * rest[k - m];
            if starred {
                m as f64 * base
            } else {
                base
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

fn grand_canonical_palm_side(g: &RateFunction, n_sites: usize, k: u32, h: &impl Fn(u64) -> f64) -> Result<f64, MeasureError> {
    let palm = MarginalTable::palm(g, k as f64 / n_sites as f64)?;
    Ok(palm.expect(h))
}

/// `|E_{nu_{Lambda_l,k}}[h(eta(0))] - E_{nu_{k/|Lambda_l|}}[h(eta(0))]|`
/// with the canonical side enumerated.
pub fn ensembles_gap(g: &RateFunction, l: usize, k: u32, h: impl Fn(u64) -> f64) -> Result<f64, MeasureError> {
    let space = CanonicalSpace::cube(g, l, k, true)?;
    let origin = space.origin();
    let canonical = canonical_expectation(&space, |s| h(s[origin] as u64));
    let grand = grand_canonical_palm_side(g, 2 * l + 1, k, &h)?;
    Ok((canonical - grand).abs())
}

/// [`ensembles_gap`] with the canonical side computed by convolution; exact
/// for any `k`.
pub fn ensembles_gap_convolved(g: &RateFunction, l: usize, k: u32, h: impl Fn(u64) -> f64) -> Result<f64, MeasureError> {
    let marginal = origin_marginal_convolved(g, 2 * l + 1, k, true)?;
    let canonical: f64 = marginal.iter().enumerate().map(|(m, p)| p * h(m as u64)).sum();
    let grand = grand_canonical_palm_side(g, 2 * l + 1, k, &h)?;
    Ok((canonical - grand).abs())
}

/// Whether every single-site marginal CDF with `r` particles dominates the
/// one with `r + 1`, for both the plain and the origin-occupied canonical
/// measures on `Lambda_l`.
pub fn canonical_stochastic_order_check(g: &RateFunction, l: usize, r: u32) -> Result<bool, MeasureError> {
    for starred in [false, true] {
        if starred && r == 0 {
            continue;
        }
        let lower = CanonicalSpace::cube(g, l, r, starred)?;
        let upper = CanonicalSpace::cube(g, l, r + 1, starred)?;
        for site in 0..2 * l + 1 {
            let (a, b) = (lower.site_marginal(site), upper.site_marginal(site));
            let (mut fa, mut fb) = (0.0, 0.0);
            for m in 0..b.len() {
                fa += a.get(m).copied().unwrap_or(0.0);
                fb += b[m];
                if fa + 1e-12 < fb {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_counts() {
        let g = RateFunction::unit();
        for l in 0..=3 {
            for j in 0..=6 {
                let s = CanonicalSpace::cube(&g, l, j, false).unwrap();
                assert_eq!(s.len() as f64, binomial(j as u64 + 2 * l as u64, 2 * l as u64));
                if j >= 1 {
                    let t = CanonicalSpace::cube(&g, l, j, true).unwrap();
                    assert_eq!(t.len() as f64, binomial(j as u64 - 1 + 2 * l as u64, 2 * l as u64));
                }
            }
        }
    }

    #[test]
    fn colex_order() {
        let g = RateFunction::unit();
        let s = CanonicalSpace::cube(&g, 1, 2, false).unwrap();
        let states: Vec<Vec<u32>> = s.states().map(|x| x.to_vec()).collect();
        assert_eq!(
            states,
            vec![
                vec![2, 0, 0],
                vec![1, 1, 0],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![0, 1, 1],
                vec![0, 0, 2]
            ]
        );
        for (i, st) in states.iter().enumerate() {
            assert_eq!(s.index_of(st), Some(i));
        }
    }

    #[test]
    fn canonical_expectation_examples() {
        let g = RateFunction::unit();
        let mu = CanonicalSpace::cube(&g, 1, 2, false).unwrap();
        assert!((canonical_expectation(&mu, |s| s[1] as f64) - 2.0 / 3.0).abs() < 1e-15);
        assert!((canonical_expectation(&mu, |_| 3.5) - 3.5).abs() < 1e-15);
        let nu = CanonicalSpace::cube(&g, 1, 2, true).unwrap();
        assert_eq!(nu.len(), 3);
        let p2 = canonical_expectation(&nu, |s| (s[1] == 2) as u8 as f64);
        assert!((p2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fugacity_independent() {
        for g in [RateFunction::unit(), RateFunction::power(0.5).unwrap()] {
            for starred in [false, true] {
                let s = CanonicalSpace::cube(&g, 2, 5, starred).unwrap();
                let a = s.weights_at_fugacity(&g, 0.3);
                let b = s.weights_at_fugacity(&g, 0.7);
                for ((x, y), w) in a.iter().zip(&b).zip(s.weights()) {
                    assert!((x - y).abs() < 1e-12 && (x - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn convolution_matches_enumeration() {
        for g in [RateFunction::unit(), RateFunction::power(0.5).unwrap()] {
            for (l, k) in [(1, 1), (1, 4), (2, 7), (3, 5)] {
                for starred in [false, true] {
                    let s = CanonicalSpace::cube(&g, l, k, starred).unwrap();
                    let enumerated = s.site_marginal(l);
                    let conv = origin_marginal_convolved(&g, 2 * l + 1, k, starred).unwrap();
                    for (a, b) in enumerated.iter().zip(&conv) {
                        assert!((a - b).abs() < 1e-12, "{} l={l} k={k}", g.label());
                    }
                }
            }
        }
    }

    #[test]
    fn ensembles_gap_examples() {
        let g = RateFunction::unit();
        assert!(ensembles_gap(&g, 2, 4, |_| 0.7).unwrap() < 1e-12);
        // canonical side 0.5 by enumeration; grand side is the Palm law at
        // density 2/3: nu(1) = (1 - phi)^2 ... = 1/(1+rho)^2 = 9/25
        let gap = ensembles_gap(&g, 1, 2, |k| (k == 1) as u8 as f64).unwrap();
        assert!((gap - (0.5 - 9.0 / 25.0)).abs() < 1e-12, "{gap}");
        let h = |k: u64| (-(k as f64)).exp();
        let at4 = ensembles_gap(&g, 4, 4, h).unwrap();
        let at8 = ensembles_gap_convolved(&g, 8, 8, h).unwrap();
        assert!(at8 < at4, "{at8} vs {at4}");
        assert!((ensembles_gap(&g, 3, 6, h).unwrap() - ensembles_gap_convolved(&g, 3, 6, h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn stochastic_order() {
        let g = RateFunction::unit();
        assert!(canonical_stochastic_order_check(&g, 1, 1).unwrap());
        assert!(canonical_stochastic_order_check(&g, 1, 0).unwrap());
        let p = RateFunction::power(0.5).unwrap();
        assert!(canonical_stochastic_order_check(&p, 1, 3).unwrap());
        for r in 0..8 {
            assert!(canonical_stochastic_order_check(&p, 2, r).unwrap());
        }
    }

    #[test]
    fn too_large() {
        let g = RateFunction::unit();
        assert!(matches!(
            CanonicalSpace::cube(&g, 8, 40, false),
            Err(MeasureError::StateSpaceTooLarge { .. })
        ));
    }
}
