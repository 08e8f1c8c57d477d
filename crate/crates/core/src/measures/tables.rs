use std::collections::HashMap;
use std::io::Write;

use rand::Rng;

use crate::model::{Configuration, Profile, RateFunction, Tag, TagKind};

use super::ensemble::{fugacity_of_density, GrandCanonical, TAIL_TOL};
use super::MeasureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginalKind {
    /// `mu_rho(k)`.
    GrandCanonical,
    /// Origin of the Palm measure: `k mu_rho(k) / rho`.
    Palm,
    /// First-class particles at the second-class site: `(k+1) mu_rho(k) / (1+rho)`.
    SecondClassKappaOrigin,
}

/// Truncated single-site law with its CDF, sampled by inversion.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    kind: MarginalKind,
    rho: f64,
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl MarginalTable {
    pub fn new(g: &RateFunction, rho: f64, kind: MarginalKind) -> Result<Self, MeasureError> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(MeasureError::InvalidParameter(format!("density {rho}")));
        }
        let probabilities = if rho == 0.0 {
            match kind {
                MarginalKind::Palm => vec![0.0, 1.0],
                _ => vec![1.0],
            }
        } else {
            let phi = fugacity_of_density(g, rho, 1e-13)?;
            let m = GrandCanonical::at_fugacity(g, phi, TAIL_TOL)?;
            let weights: Vec<f64> = match kind {
                MarginalKind::GrandCanonical => m.pmf().to_vec(),
                MarginalKind::Palm => m.pmf().iter().enumerate().map(|(k, p)| k as f64 * p).collect(),
                MarginalKind::SecondClassKappaOrigin => {
                    m.pmf().iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).collect()
                }
            };
            // renormalise on the truncated support
            let total: f64 = weights.iter().sum();
            weights.into_iter().map(|w| w / total).collect()
        };
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { kind, rho, probabilities, cdf })
    }

    pub fn grand_canonical(g: &RateFunction, rho: f64) -> Result<Self, MeasureError> {
        Self::new(g, rho, MarginalKind::GrandCanonical)
    }

    pub fn palm(g: &RateFunction, rho: f64) -> Result<Self, MeasureError> {
        Self::new(g, rho, MarginalKind::Palm)
    }

    pub fn kappa(g: &RateFunction, rho: f64) -> Result<Self, MeasureError> {
        Self::new(g, rho, MarginalKind::SecondClassKappaOrigin)
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Probability of `k` (zero beyond the cutoff).
    pub fn prob(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }

    /// `P(X <= k)`.
    pub fn cdf_at(&self, k: usize) -> f64 {
        self.cdf.get(k).copied().unwrap_or(1.0)
    }

    pub fn expect(&self, f: impl Fn(u64) -> f64) -> f64 {
        self.probabilities.iter().enumerate().map(|(k, p)| p * f(k as u64)).sum()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u32
    }

    /// CSV with columns `k,pmf,cdf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,pmf,cdf")?;
        for (k, (p, c)) in self.probabilities.iter().zip(&self.cdf).enumerate() {
            writeln!(out, "{k},{p:e},{c:e}")?;
        }
        Ok(())
    }
}

/// Which product measure to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductKind {
    /// `mu^N`: grand-canonical at every site.
    Bulk,
    /// `nu^N`: Palm marginal at site 0, tag placed there.
    TaggedPalmAtOrigin,
    /// `kappa^N`: kappa marginal at site 0, second-class tag placed there.
    SecondClassKappa,
}

/// Product measure with slowly varying density `rho0(x/N)`; tables are built
/// once and shared across replicas.
#[derive(Debug, Clone)]
pub struct ProductSampler {
    kind: ProductKind,
    site_table: Vec<usize>,
    tables: Vec<MarginalTable>,
}

impl ProductSampler {
    pub fn new(g: &RateFunction, profile: &Profile, n_sites: usize, kind: ProductKind) -> Result<Self, MeasureError> {
        let mut cache: HashMap<(u64, bool), usize> = HashMap::new();
        let mut tables = Vec::new();
        let mut site_table = Vec::with_capacity(n_sites);
        for x in 0..n_sites {
            let u = x as f64 / n_sites as f64;
            let rho = profile.eval(u);
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(MeasureError::ProfileNotPositive { u, value: rho });
            }
            let origin = x == 0 && kind != ProductKind::Bulk;
            let key = (rho.to_bits(), origin);
            let idx = match cache.get(&key) {
                Some(&i) => i,
                None => {
                    let mk = match (origin, kind) {
                        (false, _) | (true, ProductKind::Bulk) => MarginalKind::GrandCanonical,
                        (true, ProductKind::TaggedPalmAtOrigin) => MarginalKind::Palm,
                        (true, ProductKind::SecondClassKappa) => MarginalKind::SecondClassKappaOrigin,
                    };
                    tables.push(MarginalTable::new(g, rho, mk)?);
                    cache.insert(key, tables.len() - 1);
                    tables.len() - 1
                }
            };
            site_table.push(idx);
        }
        Ok(Self { kind, site_table, tables })
    }

    pub fn table_for_site(&self, x: usize) -> &MarginalTable {
        &self.tables[self.site_table[x]]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let occ: Vec<u32> = self.site_table.iter().map(|&i| self.tables[i].sample(rng)).collect();
        let c = Configuration::new(occ).expect("non-empty torus");
        let tag = match self.kind {
            ProductKind::Bulk => return c,
            ProductKind::TaggedPalmAtOrigin => Tag { position: 0, kind: TagKind::Tagged },
            ProductKind::SecondClassKappa => Tag { position: 0, kind: TagKind::SecondClass },
        };
        c.with_tag(tag).expect("Palm origin marginal has no mass at zero")
    }
}

/// One draw from the product measure described by `profile` and `kind`.
pub fn sample_product_measure<R: Rng + ?Sized>(
    g: &RateFunction,
    profile: &Profile,
    n_sites: usize,
    kind: ProductKind,
    rng: &mut R,
) -> Result<Configuration, MeasureError> {
    Ok(ProductSampler::new(g, profile, n_sites, kind)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ensemble::psi;
    use crate::rng::{stream, Purpose};

    #[test]
    fn palm_table_unit_rate_density_one() {
        // mu_1(k) = 2^-(k+1), so the Palm origin law is k 2^-(k+1)
        let t = MarginalTable::palm(&RateFunction::unit(), 1.0).unwrap();
        assert_eq!(t.prob(0), 0.0);
        assert!((t.prob(1) - 0.25).abs() < 1e-12);
        for k in 1..30 {
            assert!((t.prob(k) - k as f64 * 0.5_f64.powi(k as i32 + 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_table_matches_formula() {
        let g = RateFunction::unit();
        let gc = MarginalTable::grand_canonical(&g, 2.0).unwrap();
        let t = MarginalTable::kappa(&g, 2.0).unwrap();
        for k in 0..20 {
            assert!((t.prob(k) - (k + 1) as f64 * gc.prob(k) / 3.0).abs() < 1e-12);
        }
        // chi(rho) = kappa{zeta(0) = 0}
        assert!((t.prob(0) - crate::measures::chi(2.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_density_limits() {
        let g = RateFunction::unit();
        let palm = MarginalTable::palm(&g, 0.0).unwrap();
        assert_eq!(palm.prob(1), 1.0);
        let mut rng = stream(3, Purpose::Initial, 0);
        let c = sample_product_measure(&g, &Profile::constant(0.0), 8, ProductKind::TaggedPalmAtOrigin, &mut rng).unwrap();
        assert_eq!(c.occupancy(), &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(c.tag().unwrap().position, 0);
    }

    #[test]
    fn palm_normalisation_and_psi_identity() {
        for g in [RateFunction::unit(), RateFunction::power(0.5).unwrap()] {
            for i in 1..=16 {
                let rho = 0.5 * i as f64;
                let gc = MarginalTable::grand_canonical(&g, rho).unwrap();
                let mass = gc.expect(|k| k as f64) / rho;
                assert!((mass - 1.0).abs() < 1e-12, "{} {rho}", g.label());
                let palm = MarginalTable::palm(&g, rho).unwrap();
                let lhs = palm.expect(|k| if k == 0 { 0.0 } else { g.eval(k) / k as f64 });
                assert!((lhs - psi(&g, rho).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn marginals_stochastically_ordered_in_density() {
        let g = RateFunction::power(0.5).unwrap();
        for kind in [MarginalKind::GrandCanonical, MarginalKind::Palm, MarginalKind::SecondClassKappaOrigin] {
            let tables: Vec<_> = (1..=20).map(|i| MarginalTable::new(&g, 0.25 * i as f64, kind).unwrap()).collect();
            for w in tables.windows(2) {
                for k in 0..60 {
                    assert!(w[1].cdf_at(k) <= w[0].cdf_at(k) + 1e-12, "{kind:?} k = {k}");
                }
            }
        }
    }

    #[test]
    fn rejects_negative_profile() {
        let g = RateFunction::unit();
        let r = ProductSampler::new(&g, &Profile::sine(0.2, 0.5), 16, ProductKind::Bulk);
        assert!(matches!(r, Err(MeasureError::ProfileNotPositive { .. })));
    }

    #[test]
    fn empirical_density_law_of_large_numbers() {
        let g = RateFunction::unit();
        let rho = 1.5;
        let n = 32;
        let sampler = ProductSampler::new(&g, &Profile::constant(rho), n, ProductKind::Bulk).unwrap();
        let mut rng = stream(11, Purpose::Initial, 0);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| sampler.sample(&mut rng).total_particles() as f64 / n as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let se = (var / samples.len() as f64).sqrt();
        assert!((mean - rho).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn csv_export() {
        let t = MarginalTable::grand_canonical(&RateFunction::unit(), 1.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("k,pmf,cdf"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[0], 0.0);
        assert!((first[1] - 0.5).abs() < 1e-12 && (first[2] - 0.5).abs() < 1e-12);
    }
}
