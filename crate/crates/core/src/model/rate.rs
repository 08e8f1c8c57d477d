use std::sync::Arc;

use super::ModelError;

/// Default memoisation cap for rate lookups.
pub const DEFAULT_RATE_CAP: usize = 4096;

/// Growth class of an admissible rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateClass {
    /// `a0 <= g(k) <= a1` for `k >= 1`.
    Bounded,
    /// `g(k) -> inf`, `g(k)/k` strictly decreasing to zero.
    Sublinear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    /// `g(k) = 1{k >= 1}`.
    UnitRate,
    /// `g(k) = k^gamma`, `0 < gamma < 1`.
    Power { gamma: f64 },
    /// Explicit `g(1), ..., g(m)`; `g(k) = g(m)` beyond the table.
    BoundedTable { values: Vec<f64> },
}

/// The jump rate `g` of a zero-range process.
///
/// `g(0) = 0` always. Values up to `cap` are memoised since the rate sits in
/// the simulator's hot loop.
#[derive(Debug, Clone)]
pub struct RateFunction {
    kind: RateKind,
    a0: f64,
    a1: f64,
    a2: f64,
    memo: Arc<[f64]>,
}

impl PartialEq for RateFunction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl RateFunction {
    pub fn unit() -> Self {
        Self::from_kind(RateKind::UnitRate, 1.0, 1.0, 1.0)
    }

    pub fn power(gamma: f64) -> Result<Self, ModelError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ModelError::InvalidRate(format!(
                "power exponent must lie in (0, 1), got {gamma}"
            )));
        }
        // k^gamma is concave with g(1) = 1, so g(k)/k <= 1 and the largest
        // increment is g(1) - g(0).
        Ok(Self::from_kind(RateKind::Power { gamma }, 1.0, 1.0, 1.0))
    }

    /// Bounded rate from an explicit table `g(1), ..., g(m)`.
    pub fn bounded_table(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidRate("rate table is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidRate("rate table has non-finite entries".into()));
        }
        if values[0] <= 0.0 {
            return Err(ModelError::InvalidRate("g(1) must be positive".into()));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(ModelError::InvalidRate(format!(
                "rate table decreases at k = {}",
                i + 2
            )));
        }
        let a0 = values[0];
        let a1 = *values.last().unwrap();
        let a2 = std::iter::once(values[0])
            .chain(values.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0_f64, f64::max);
        Ok(Self::from_kind(RateKind::BoundedTable { values }, a0, a1, a2))
    }

    fn from_kind(kind: RateKind, a0: f64, a1: f64, a2: f64) -> Self {
        let mut rate = Self { kind, a0, a1, a2, memo: Arc::from(Vec::new()) };
        let memo: Vec<f64> = (0..=DEFAULT_RATE_CAP as u64).map(|k| rate.compute(k)).collect();
        rate.memo = Arc::from(memo);
        rate
    }

    fn compute(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.kind {
            RateKind::UnitRate => 1.0,
            RateKind::Power { gamma } => (k as f64).powf(*gamma),
            RateKind::BoundedTable { values } => {
                let i = (k as usize).min(values.len()) - 1;
                values[i]
            }
        }
    }

    /// `g(k)`.
    #[inline]
    pub fn eval(&self, k: u64) -> f64 {
        match self.memo.get(k as usize) {
            Some(&v) => v,
            None => self.compute(k),
        }
    }

    /// `g(k)/k` for `k >= 1`; zero at `k = 0`.
    #[inline]
    pub fn per_particle(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.eval(k) / k as f64
        }
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn class(&self) -> RateClass {
        match self.kind {
            RateKind::Power { .. } => RateClass::Sublinear,
            _ => RateClass::Bounded,
        }
    }

    /// Lower bound of `g` on the positive integers.
    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// `sup g` for bounded rates, `sup g(k)/k` for sublinear ones.
    pub fn a1(&self) -> f64 {
        self.a1
    }

    /// Lipschitz constant of `g`.
    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// `lim g(k)`, the radius of convergence of the partition function.
    pub fn g_infinity(&self) -> f64 {
        match &self.kind {
            RateKind::UnitRate => 1.0,
            RateKind::Power { .. } => f64::INFINITY,
            RateKind::BoundedTable { values } => *values.last().unwrap(),
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, RateKind::UnitRate)
    }

    /// Short textual form, accepted back by [`crate::io::spec::parse_rate`]
    /// for the built-in kinds.
    pub fn label(&self) -> String {
        match &self.kind {
            RateKind::UnitRate => "unit".into(),
            RateKind::Power { gamma } => format!("pow:{gamma}"),
            RateKind::BoundedTable { values } => format!(
                "table[{}]",
                values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }

    /// Scan `k <= cap` for the structural conditions on `g`.
    pub fn check_invariants(&self, cap: u64) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidRate(m));
        if self.eval(0) != 0.0 {
            return fail("g(0) != 0".into());
        }
        if self.eval(1) <= 0.0 {
            return fail("g(1) <= 0".into());
        }
        let mut prev = self.eval(1);
        for k in 1..cap {
            let next = self.eval(k + 1);
            if next < prev {
                return fail(format!("g decreases at k = {}", k + 1));
            }
            if (next - prev).abs() > self.a2 + 1e-12 {
                return fail(format!("Lipschitz bound a2 violated at k = {k}"));
            }
            match self.class() {
                RateClass::Bounded => {
                    if next < self.a0 - 1e-12 || next > self.a1 + 1e-12 {
                        return fail(format!("bound a0 <= g <= a1 violated at k = {}", k + 1));
                    }
                }
                RateClass::Sublinear => {
                    let (r0, r1) = (prev / k as f64, next / (k + 1) as f64);
                    if r1 >= r0 {
                        return fail(format!("g(k)/k not strictly decreasing at k = {}", k + 1));
                    }
                    if r0 > self.a1 + 1e-12 || prev < self.a0 - 1e-12 {
                        return fail(format!("sublinear bounds violated at k = {k}"));
                    }
                }
            }
            prev = next;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rate_values() {
        let g = RateFunction::unit();
        assert_eq!(g.eval(0), 0.0);
        assert_eq!(g.eval(7), 1.0);
        assert_eq!(g.eval(1_000_000), 1.0);
        assert_eq!(g.g_infinity(), 1.0);
        g.check_invariants(10_000).unwrap();
    }

    #[test]
    fn power_rate_values() {
        let g = RateFunction::power(0.5).unwrap();
        assert_eq!(g.eval(4), 2.0);
        assert_eq!(g.eval(0), 0.0);
        assert_eq!(g.class(), RateClass::Sublinear);
        assert!(g.g_infinity().is_infinite());
        // memo and direct evaluation agree across the cap
        let k = DEFAULT_RATE_CAP as u64;
        assert_eq!(g.eval(k + 5), ((k + 5) as f64).sqrt());
        g.check_invariants(10_000).unwrap();
    }

    #[test]
    fn power_per_particle_strictly_decreasing_to_a_million() {
        let g = RateFunction::power(0.5).unwrap();
        let mut prev = g.per_particle(1);
        for k in 2..=1_000_000u64 {
            let r = g.per_particle(k);
            assert!(r < prev, "k = {k}");
            prev = r;
        }
    }

    #[test]
    fn bounded_table_tail() {
        let g = RateFunction::bounded_table(vec![0.5, 0.8, 1.0]).unwrap();
        assert_eq!(g.eval(1), 0.5);
        assert_eq!(g.eval(3), 1.0);
        assert_eq!(g.eval(50), 1.0);
        assert_eq!(g.a0(), 0.5);
        assert_eq!(g.a1(), 1.0);
        assert_eq!(g.a2(), 0.5);
        g.check_invariants(100).unwrap();
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(RateFunction::power(1.0).is_err());
        assert!(RateFunction::power(0.0).is_err());
        assert!(RateFunction::bounded_table(vec![]).is_err());
        assert!(RateFunction::bounded_table(vec![1.0, 0.5]).is_err());
        assert!(RateFunction::bounded_table(vec![0.0, 1.0]).is_err());
    }
}
