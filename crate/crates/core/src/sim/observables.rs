use serde::{Deserialize, Serialize};

use crate::model::RateFunction;

/// Function `h` of the frame-origin occupation whose time integral is
/// accumulated during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OriginObservable {
    /// `g(k)/k`, zero at `k = 0`.
    PerParticleRate,
    /// `1{k = value}`.
    Indicator { value: u32 },
    /// `exp(-k)`.
    ExpNeg,
    Constant { value: f64 },
}

impl OriginObservable {
    pub fn name(&self) -> String {
        match self {
            Self::PerParticleRate => "g_over_k".into(),
            Self::Indicator { value } => format!("ind_{value}"),
            Self::ExpNeg => "exp_neg".into(),
            Self::Constant { value } => format!("const_{value}"),
        }
    }

    #[inline]
    pub fn eval(&self, g: &RateFunction, k: u32) -> f64 {
        match self {
            Self::PerParticleRate => g.per_particle(k as u64),
            Self::Indicator { value } => f64::from(k == *value),
            Self::ExpNeg => (-(k as f64)).exp(),
            Self::Constant { value } => *value,
        }
    }
}

/// Online estimate of the local replacement integrand
/// `(K)^-1 sum_{x=1..K} Hbar_l(eta^L(x))` with `K = floor(eps_outer N)` and
/// `L = floor(eps_inner N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplacementProbe {
    pub observable: OriginObservable,
    pub l: usize,
    pub eps_inner: f64,
    pub eps_outer: f64,
}

impl ReplacementProbe {
    pub fn name(&self) -> String {
        format!("replace:{}:l={}:in={}:out={}", self.observable.name(), self.l, self.eps_inner, self.eps_outer)
    }

    pub fn outer_count(&self, n: usize) -> usize {
        ((self.eps_outer * n as f64).floor() as usize).max(1)
    }

    pub fn inner_radius(&self, n: usize) -> usize {
        (self.eps_inner * n as f64).floor() as usize
    }
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Block averages over blocks of `floor(sqrt(N))` sites; the last block may
/// be shorter. Returns `(first site, length, density)` per block.
pub fn block_densities(counts: &[u32]) -> Vec<(usize, usize, f64)> {
    let n = counts.len();
    let b = ((n as f64).sqrt().floor() as usize).max(1);
    (0..n)
        .step_by(b)
        .map(|start| {
            let len = b.min(n - start);
            let s: u64 = counts[start..start + len].iter().map(|&c| c as u64).sum();
            (start, len, s as f64 / len as f64)
        })
        .collect()
}

/// Block averages of a real-valued site field, same blocks as
/// [`block_densities`].
pub fn block_means(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let b = ((n as f64).sqrt().floor() as usize).max(1);
    (0..n).step_by(b).map(|s| values[s..(s + b).min(n)].iter().sum::<f64>() / (b.min(n - s)) as f64).collect()
}
