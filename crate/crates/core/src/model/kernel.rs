use rand::Rng;

use super::ModelError;

/// Finite-range, mean-zero, irreducible single-particle jump law `p(z)`.
///
/// Built from integer weights so that the mean-zero condition is checked in
/// exact arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    offsets: Vec<i64>,
    /// Weights reduced by their common divisor.
    weights: Vec<u64>,
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
    support_radius: i64,
    sigma2: f64,
    symmetric: bool,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl JumpKernel {
    /// Symmetric nearest-neighbour kernel `p(+1) = p(-1) = 1/2`.
    pub fn nearest_neighbor() -> Self {
        Self::from_weights(&[(-1, 1), (1, 1)]).expect("nearest-neighbour kernel is valid")
    }

    /// `p(z) = w(z) / sum w`.
    pub fn from_weights(weights: &[(i64, u64)]) -> Result<Self, ModelError> {
        let mut entries: Vec<(i64, u64)> = weights.iter().copied().filter(|&(_, w)| w > 0).collect();
        entries.sort_unstable();
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ModelError::InvalidKernel("repeated offset".into()));
        }
        if entries.is_empty() {
            return Err(ModelError::InvalidKernel("kernel has no support".into()));
        }
        if entries.iter().any(|&(z, _)| z == 0) {
            return Err(ModelError::InvalidKernel("offset 0 is not a jump".into()));
        }
        let total: u128 = entries.iter().map(|&(_, w)| w as u128).sum();
        let first_moment: i128 = entries.iter().map(|&(z, w)| z as i128 * w as i128).sum();
        if first_moment != 0 {
            return Err(ModelError::InvalidKernel(format!(
                "kernel is not mean-zero (sum z w(z) = {first_moment})"
            )));
        }
        let g = entries.iter().fold(0u64, |acc, &(z, _)| gcd(acc, z.unsigned_abs()));
        if g != 1 {
            return Err(ModelError::InvalidKernel(format!(
                "support generates {g}Z, not Z"
            )));
        }
        let second: u128 = entries.iter().map(|&(z, w)| (z * z) as u128 * w as u128).sum();
        let offsets: Vec<i64> = entries.iter().map(|e| e.0).collect();
        let common = entries.iter().fold(0u64, |acc, &(_, w)| gcd(acc, w));
        let weights = entries.iter().map(|&(_, w)| w / common).collect();
        let probabilities: Vec<f64> = entries.iter().map(|&(_, w)| w as f64 / total as f64).collect();
        let mut acc = 0u128;
        let cdf = entries
            .iter()
            .map(|&(_, w)| {
                acc += w as u128;
                acc as f64 / total as f64
            })
            .collect();
        let symmetric = entries
            .iter()
            .all(|&(z, w)| entries.iter().any(|&(y, v)| y == -z && v == w));
        Ok(Self {
            support_radius: offsets.iter().map(|z| z.abs()).max().unwrap(),
            sigma2: second as f64 / total as f64,
            offsets,
            weights,
            probabilities,
            cdf,
            symmetric,
        })
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support_radius(&self) -> i64 {
        self.support_radius
    }

    /// `sum z^2 p(z)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.support_radius == 1
    }

    /// `p(z)`, zero outside the support.
    pub fn prob(&self, z: i64) -> f64 {
        self.offsets
            .iter()
            .position(|&y| y == z)
            .map_or(0.0, |i| self.probabilities[i])
    }

    /// Draw an offset.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.offsets.len() == 2 && self.symmetric {
            return if rng.random::<bool>() { self.offsets[1] } else { self.offsets[0] };
        }
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.offsets.len() - 1);
        self.offsets[i]
    }

    /// `nn`, or the reduced integer weights as `z:w,...`; accepted back by
    /// [`crate::io::spec::parse_kernel`].
    pub fn label(&self) -> String {
        if self.is_nearest_neighbor() && self.symmetric {
            return "nn".into();
        }
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| format!("{z}:{w}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Default for JumpKernel {
    fn default() -> Self {
        Self::nearest_neighbor()
    }
}
