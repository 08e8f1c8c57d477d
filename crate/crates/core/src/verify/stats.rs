use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Minimum sample size accepted by the two-sample tests.
pub const MIN_SAMPLE: usize = 100;
/// Bins with expected count below this are merged in [`chi_square_gof`].
pub const MIN_EXPECTED: f64 = 5.0;

fn wrapped_sorted(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().map(|x| x.rem_euclid(1.0)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `F_a - F_b` just after each point of the merged sample, in order.
fn cdf_differences(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        out.push(i as f64 / na - j as f64 / nb);
    }
    out
}

/// Asymptotic Kolmogorov tail `Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test on values wrapped to `[0, 1)`.
/// Returns `(D, p)` with `p` from the asymptotic formula.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (sa, sb) = (wrapped_sorted(a), wrapped_sorted(b));
    let d = cdf_differences(&sa, &sb).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

/// KS distance on the circle: the sup-distance after re-anchoring both
/// CDFs at the best single cut point `c`, i.e.
/// `min_c max(max D - D(c), D(c) - min D)` with `D = F_a - F_b`.
pub fn circular_ks(a: &[f64], b: &[f64]) -> f64 {
    let diffs = cdf_differences(&wrapped_sorted(a), &wrapped_sorted(b));
    let hi = diffs.iter().copied().fold(0.0_f64, f64::max);
    let lo = diffs.iter().copied().fold(0.0_f64, f64::min);
    diffs.iter().chain([0.0].iter()).map(|&c| (hi - c).max(c - lo)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p: f64,
}

/// Goodness of fit of `observed` counts to `probs` (summing to 1 over the
/// listed bins plus an implicit tail). Adjacent bins are merged from the
/// right until each expected count is at least [`MIN_EXPECTED`].
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let len = observed.len().max(probs.len());
    let obs = |k: usize| observed.get(k).copied().unwrap_or(0) as f64;
    let prob = |k: usize| probs.get(k).copied().unwrap_or(0.0);
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for k in 0..len {
        o += obs(k);
        e += n * prob(k);
        if e >= MIN_EXPECTED {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    // leftover bins and the tail mass go into the last cell
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0) * n;
    e += tail;
    match cells.last_mut() {
        Some(last) if e < MIN_EXPECTED => {
            last.0 += o;
            last.1 += e;
        }
        _ if o > 0.0 || e > 0.0 => cells.push((o, e)),
        _ => {}
    }
    let statistic: f64 = cells.iter().filter(|c| c.1 > 0.0).map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1);
    let p = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN) };
    ChiSquare { statistic, dof, p }
}

/// Sum of independent chi-square statistics with their degrees of freedom.
pub fn combine_chi_square(parts: &[ChiSquare]) -> ChiSquare {
    let statistic = parts.iter().map(|c| c.statistic).sum();
    let dof = parts.iter().map(|c| c.dof).sum();
    let p = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN) };
    ChiSquare { statistic, dof, p }
}

/// Linear-interpolated quantile (type 7) of `xs`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `Some(true)` when strictly more than half of consecutive pairs decrease;
/// `None` with fewer than two points.
pub fn decreasing_trend(values: &[f64]) -> Option<bool> {
    if values.len() < 2 {
        return None;
    }
    let pairs = values.len() - 1;
    let down = values.windows(2).filter(|w| w[1] < w[0]).count();
    Some(2 * down > pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn uniforms(seed: u64, idx: u64, n: usize) -> Vec<f64> {
        let mut r = stream(seed, Purpose::NullCalibration, idx);
        (0..n).map(|_| r.random()).collect()
    }

    #[test]
    fn identical_samples() {
        let a = uniforms(1, 0, 500);
        assert_eq!(ks_two_sample(&a, &a).0, 0.0);
        assert_eq!(circular_ks(&a, &a), 0.0);
    }

    #[test]
    fn uniform_null_p_values() {
        let ok = (0..100)
            .filter(|&i| ks_two_sample(&uniforms(2, 2 * i, 10_000), &uniforms(2, 2 * i + 1, 10_000)).1 > 0.01)
            .count();
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn shifted_sample_detected() {
        let a = uniforms(3, 0, 10_000);
        // a non-uniform law so that a rotation is visible
        let b: Vec<f64> = a.iter().map(|u| u * u).collect();
        let c: Vec<f64> = uniforms(3, 1, 10_000).iter().map(|u| u * u + 0.2).collect();
        assert!(ks_two_sample(&b, &c).0 >= 0.15);
        // the circular statistic is blind to rotations only if the shift is
        // matched by re-anchoring, which it is not for a non-uniform law
        assert!(circular_ks(&b, &c) > 0.05);
    }

    #[test]
    fn circular_ks_is_rotation_invariant() {
        let a: Vec<f64> = uniforms(4, 0, 300).iter().map(|u| u * u).collect();
        let b: Vec<f64> = uniforms(4, 1, 400).iter().map(|u| u.sqrt()).collect();
        let d0 = circular_ks(&a, &b);
        let rot = |v: &[f64]| v.iter().map(|x| x + 0.37).collect::<Vec<_>>();
        assert!((circular_ks(&rot(&a), &rot(&b)) - d0).abs() < 1e-12);
        assert!(d0 <= ks_two_sample(&a, &b).0 + 1e-15);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ~ 0.05, Q(1.63) ~ 0.01
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn chi_square_exact_fit_and_misfit() {
        let probs = [0.5, 0.25, 0.125, 0.125];
        let good = chi_square_gof(&[500, 250, 125, 125], &probs);
        assert_eq!(good.statistic, 0.0);
        assert_eq!(good.dof, 3);
        assert!((good.p - 1.0).abs() < 1e-12);
        let bad = chi_square_gof(&[250, 250, 250, 250], &probs);
        assert!(bad.p < 1e-10);
        // 20 * 0.125 = 2.5 < 5: last two bins merge
        assert_eq!(chi_square_gof(&[10, 5, 3, 2], &probs).dof, 2);
    }

    #[test]
    fn quantiles_and_trend() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(decreasing_trend(&[1.0]), None);
        assert_eq!(decreasing_trend(&[3.0, 2.0, 1.0]), Some(true));
        assert_eq!(decreasing_trend(&[3.0, 2.0, 2.5]), Some(false));
        assert_eq!(decreasing_trend(&[4.0, 3.0, 3.5, 2.0]), Some(true));
    }

    proptest! {
        #[test]
        fn ks_bounded_and_symmetric(a in prop::collection::vec(0.0..1.0f64, 1..60), b in prop::collection::vec(0.0..1.0f64, 1..60)) {
            let (d, p) = ks_two_sample(&a, &b);
            let (e, _) = ks_two_sample(&b, &a);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((d - e).abs() < 1e-12);
            let c = circular_ks(&a, &b);
            prop_assert!(c >= 0.0 && c <= d + 1e-12);
        }
    }
}
