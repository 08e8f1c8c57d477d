/// Prefix-sum tree over per-site rates with logarithmic update and
/// selection.
///
/// The tree is padded to a power of two so that selection is a single
/// top-down descent.
#[derive(Debug, Clone)]
pub struct RateTree {
    len: usize,
    size: usize,
    tree: Vec<f64>,
    rates: Vec<f64>,
}

impl RateTree {
    pub fn new(rates: &[f64]) -> Self {
        let len = rates.len();
        let size = len.next_power_of_two().max(1);
        let mut t = Self { len, size, tree: vec![0.0; size + 1], rates: vec![0.0; len] };
        t.rebuild_from(rates);
        t
    }

    fn rebuild_from(&mut self, rates: &[f64]) {
        self.rates.copy_from_slice(rates);
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for (i, &r) in rates.iter().enumerate() {
            self.tree[i + 1] = r;
        }
        for i in 1..=self.size {
            let parent = i + (i & i.wrapping_neg());
            if parent <= self.size {
                self.tree[parent] += self.tree[i];
            }
        }
    }

    /// Recompute internal sums from the stored rates, discarding the
    /// roundoff accumulated by incremental updates.
    pub fn refresh(&mut self) {
        let rates = std::mem::take(&mut self.rates);
        self.rates = vec![0.0; self.len];
        self.rebuild_from(&rates);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.tree[self.size]
    }

    #[inline]
    pub fn set(&mut self, i: usize, rate: f64) {
        debug_assert!(rate >= 0.0 && rate.is_finite(), "bad rate {rate} at {i}");
        let delta = rate - self.rates[i];
        if delta == 0.0 {
            return;
        }
        self.rates[i] = rate;
        let mut k = i + 1;
        while k <= self.size {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum of rates at indices `< i`.
    pub fn prefix_sum(&self, i: usize) -> f64 {
        let mut k = i;
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }

    /// Index `i` with `prefix(i) <= target < prefix(i+1)`, skipping
    /// zero-rate sites. `target` must lie in `[0, total)`.
    #[inline]
    pub fn select(&self, mut target: f64) -> usize {
        let mut pos = 0usize;
        let mut step = self.size;
        while step > 0 {
            let next = pos + step;
            if next <= self.size && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        // roundoff can land on a trailing zero-rate site
        let mut i = pos.min(self.len - 1);
        while self.rates[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn selection_frequencies() {
        let t = RateTree::new(&[1.0, 0.0, 3.0, 2.0, 0.0]);
        assert_eq!(t.total(), 6.0);
        let mut rng = stream(5, Purpose::Dynamics, 0);
        let mut counts = [0usize; 5];
        let n = 120_000;
        for _ in 0..n {
            counts[t.select(rng.random::<f64>() * t.total())] += 1;
        }
        assert_eq!(counts[1], 0);
        assert_eq!(counts[4], 0);
        for (i, w) in [(0, 1.0), (2, 3.0), (3, 2.0)] {
            let f = counts[i] as f64 / n as f64;
            assert!((f - w / 6.0).abs() < 0.01, "{i}: {f}");
        }
    }

    proptest! {
        #[test]
        fn prefix_sums_match_linear_scan(
            rates in proptest::collection::vec(0.0f64..5.0, 1..70),
            updates in proptest::collection::vec((0usize..70, 0.0f64..5.0), 0..40),
        ) {
            let mut t = RateTree::new(&rates);
            let mut plain = rates.clone();
            for (i, r) in updates {
                let i = i % plain.len();
                t.set(i, r);
                plain[i] = r;
            }
            let mut acc = 0.0;
            for i in 0..plain.len() {
                prop_assert!((t.prefix_sum(i) - acc).abs() < 1e-9);
                acc += plain[i];
            }
            prop_assert!((t.total() - acc).abs() < 1e-9);
            // every positive target selects the site whose interval holds it
            let mut lo = 0.0;
            for (i, &r) in plain.iter().enumerate() {
                if r > 1e-6 {
                    prop_assert_eq!(t.select(lo + 0.5 * r), i);
                }
                lo += r;
            }
        }
    }
}
