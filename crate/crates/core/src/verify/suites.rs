use std::time::Instant;

use rayon::prelude::*;

use crate::diffusion::{integrate, Coefficient, CoefficientFn, DiffusionSpec, Ensemble};
use crate::hydro::{flux_for_profile, solve, DensityField, HydroSpec};
use crate::measures::{
    ensembles_gap, ensembles_gap_convolved, state_count, Flux, MarginalTable, ENUMERATION_CAP,
};
use crate::model::{JumpKernel, Profile, RateFunction};
use crate::rng::{derive_seed, stream, Purpose};
use crate::sim::{replacement_discrepancy, Process, ReplacementProbe, SimulationSpec, Simulator, TrajectoryRecord};
use crate::spectral::{
    build_generator, claim_l1_table, fit_gap_exponent, spectral_gap_with, verify_gap_lemmas, GapMethod, LemmaReport,
};

use super::stats::{chi_square_gof, circular_ks, combine_chi_square, ks_two_sample, mean, median, quantile, MIN_SAMPLE};
use super::{Check, ComparisonReport, SuiteKind, VerifyError, VerifySettings, MARGINALS_NOTE};

const REFERENCE_SALT: u64 = 0x5EF0;
const NULL_SALT: u64 = 0x4E00;

/// Model and settings shared by all suites. `rates` are the rate functions
/// swept by the `gaps` and `invariance` suites; the other suites use `g`.
#[derive(Debug, Clone)]
pub struct SuiteContext {
    pub g: RateFunction,
    pub kernel: JumpKernel,
    pub rates: Vec<RateFunction>,
    pub settings: VerifySettings,
}

impl SuiteContext {
    pub fn new(g: RateFunction, kernel: JumpKernel, settings: VerifySettings) -> Self {
        let rates = vec![RateFunction::unit(), RateFunction::power(0.5).expect("valid exponent")];
        Self { g, kernel, rates, settings }
    }

    fn validate(&self) -> Result<(), VerifyError> {
        let s = &self.settings;
        let bad = |m: &str| Err(VerifyError::Invalid(m.into()));
        if s.n_values.is_empty() {
            return bad("n_values is empty");
        }
        if !(s.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if s.null_runs == 0 || !(s.null_quantile > 0.0 && s.null_quantile < 1.0) {
            return bad("null calibration needs at least one run and a quantile in (0, 1)");
        }
        if s.clt_replicas < MIN_SAMPLE as u64 || s.reference_paths < MIN_SAMPLE as u64 {
            return bad("KS comparisons need at least 100 samples per side");
        }
        if s.sde_steps < 1000 {
            return bad("sde_steps must be at least 1000");
        }
        Ok(())
    }
}

pub fn run_suite(kind: SuiteKind, ctx: &SuiteContext) -> Result<ComparisonReport, VerifyError> {
    ctx.validate()?;
    let start = Instant::now();
    let mut rep = match kind {
        SuiteKind::Hydro => hydro_suite(ctx)?,
        SuiteKind::TaggedClt => clt_report(ctx, &simulate_clt(ctx, Process::Tagged)?)?,
        SuiteKind::FrameDensity => frame_density_report(ctx, &simulate_clt(ctx, Process::Tagged)?)?,
        SuiteKind::SecondClassClt => clt_report(ctx, &simulate_clt(ctx, Process::SecondClass)?)?,
        SuiteKind::Replacement => replacement_suite(ctx)?,
        SuiteKind::Ensembles => ensembles_suite(ctx)?,
        SuiteKind::Gaps => gaps_suite(ctx)?.0,
        SuiteKind::Invariance => invariance_suite(ctx)?,
    };
    rep.runtime = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// Flux and PDE solution for `profile` up to `horizon` on `grid_size` nodes.
pub fn limit_field(
    g: &RateFunction,
    profile: &Profile,
    sigma2: f64,
    horizon: f64,
    grid_size: usize,
) -> Result<(Flux, DensityField), VerifyError> {
    let flux = flux_for_profile(g, profile)?;
    let field = solve(profile, &flux, &HydroSpec::new(sigma2, horizon, grid_size))?;
    Ok((flux, field))
}

fn site_values(field: &DensityField, t: f64, n: usize, shift: f64) -> Result<Vec<f64>, VerifyError> {
    (0..n).map(|x| Ok(field.interpolate(t, x as f64 / n as f64 + shift)?)).collect()
}

/// `L^1` distance of block averages (blocks of `floor(sqrt N)` sites).
pub fn block_l1_fields(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let size = ((n as f64).sqrt().floor() as usize).max(1);
    (0..n)
        .step_by(size)
        .map(|s| {
            let len = size.min(n - s);
            let (ma, mb) = (a[s..s + len].iter().sum::<f64>(), b[s..s + len].iter().sum::<f64>());
            (ma - mb).abs() / n as f64
        })
        .sum()
}

fn mean_profile<'a>(profiles: impl Iterator<Item = &'a [u32]>, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    let mut count = 0usize;
    for p in profiles {
        acc.iter_mut().zip(p).for_each(|(a, &c)| *a += c as f64);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count.max(1) as f64);
    acc
}

fn simulator(
    ctx: &SuiteContext,
    process: Process,
    n: usize,
    horizon: f64,
    profile: Profile,
    salt: u64,
) -> Result<Simulator, VerifyError> {
    let mut spec = SimulationSpec::new(process, ctx.g.clone(), n, horizon, profile, derive_seed(ctx.settings.seed, salt));
    spec.kernel = ctx.kernel.clone();
    Ok(Simulator::new(spec)?)
}

fn process_salt(process: Process, n: usize) -> u64 {
    let p = match process {
        Process::Bulk => 1,
        Process::Tagged => 2,
        Process::SecondClass => 3,
    };
    (p << 32) | n as u64
}

fn hydro_suite(ctx: &SuiteContext) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let t = s.horizon;
    let (_, field) = limit_field(&ctx.g, &s.profile, ctx.kernel.sigma2(), t, s.grid_size)?;
    let mut rep = ComparisonReport::new(SuiteKind::Hydro, "block-l1");
    for &n in &s.n_values {
        let sim = simulator(ctx, Process::Bulk, n, t, s.profile, process_salt(Process::Bulk, n))?;
        let records = sim.run_replicas(0..s.hydro_replicas);
        let emp = mean_profile(records.iter().map(|r| r.last().profile.as_slice()), n);
        rep.n_values.push(n);
        rep.statistics.push(block_l1_fields(&emp, &site_values(&field, t, n, 0.0)?));
    }
    rep.add_trend_check();
    let n = *s.n_values.last().expect("validated");
    let pde = site_values(&field, t, n, 0.0)?;
    let tables = pde.iter().map(|&r| MarginalTable::grand_canonical(&ctx.g, r)).collect::<Result<Vec<_>, _>>()?;
    let nulls: Vec<f64> = (0..s.null_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(s.seed, Purpose::NullCalibration, i);
            let mut acc = vec![0.0; n];
            for _ in 0..s.hydro_replicas {
                acc.iter_mut().zip(&tables).for_each(|(a, tab)| *a += tab.sample(&mut rng) as f64);
            }
            acc.iter_mut().for_each(|a| *a /= s.hydro_replicas as f64);
            block_l1_fields(&acc, &pde)
        })
        .collect();
    let thr = quantile(&nulls, s.null_quantile);
    rep.null_threshold = Some(thr);
    rep.checks.push(Check::below(format!("block L1 at N={n} below null quantile"), *rep.statistics.last().unwrap(), thr));
    rep.notes.push(format!(
        "null: mean of {} product-measure draws at rho(T, x/N), {} runs",
        s.hydro_replicas, s.null_runs
    ));
    rep.notes.push(MARGINALS_NOTE.into());
    Ok(rep.finish())
}

/// Tagged or second-class replicas for every `N`, with the PDE field.
#[derive(Debug, Clone)]
pub struct CltRuns {
    pub process: Process,
    pub n_values: Vec<usize>,
    pub records: Vec<Vec<TrajectoryRecord>>,
    pub field: DensityField,
}

impl CltRuns {
    /// Rescaled unwrapped positions `X_T / N` per `N`.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .zip(&self.n_values)
            .map(|(rs, &n)| rs.iter().map(|r| r.last().rescaled_position(n)).collect())
            .collect()
    }
}

pub fn simulate_clt(ctx: &SuiteContext, process: Process) -> Result<CltRuns, VerifyError> {
    let s = &ctx.settings;
    if process == Process::Bulk {
        return Err(VerifyError::Invalid("CLT suites need a distinguished particle".into()));
    }
    let (_, field) = limit_field(&ctx.g, &s.profile, ctx.kernel.sigma2(), s.horizon, s.grid_size)?;
    let mut records = Vec::new();
    for &n in &s.n_values {
        let sim = simulator(ctx, process, n, s.horizon, s.profile, process_salt(process, n))?;
        records.push(sim.run_replicas(0..s.clt_replicas));
    }
    Ok(CltRuns { process, n_values: s.n_values.clone(), records, field })
}

fn coefficient_for(process: Process) -> Coefficient {
    match process {
        Process::SecondClass => Coefficient::SecondClassChi,
        _ => Coefficient::TaggedPsi,
    }
}

fn sde_spec(ctx: &SuiteContext, process: Process, replicas: u64, seed: u64) -> DiffusionSpec {
    let s = &ctx.settings;
    DiffusionSpec {
        coefficient: coefficient_for(process),
        sigma2: ctx.kernel.sigma2(),
        dt: s.horizon / s.sde_steps as f64,
        horizon: s.horizon,
        replicas,
        seed,
        checkpoints: Vec::new(),
    }
}

fn with_coefficient<T>(ctx: &SuiteContext, process: Process, f: impl FnOnce(&CoefficientFn) -> T) -> Result<T, VerifyError> {
    Ok(match process {
        Process::SecondClass => f(&CoefficientFn::Chi),
        _ => {
            let flux = flux_for_profile(&ctx.g, &ctx.settings.profile)?;
            f(&CoefficientFn::Psi(&flux))
        }
    })
}

/// Circular-KS statistics of `null_runs` fresh SDE samples of size
/// `clt_replicas` against `reference`.
pub fn clt_null_statistics(
    ctx: &SuiteContext,
    process: Process,
    field: &DensityField,
    reference: &[f64],
) -> Result<Vec<f64>, VerifyError> {
    let s = &ctx.settings;
    with_coefficient(ctx, process, |coef| {
        (0..s.null_runs as u64)
            .map(|i| {
                let spec = sde_spec(ctx, process, s.clt_replicas, derive_seed(s.seed, NULL_SALT + i));
                let ens = integrate(&spec, field, coef)?;
                Ok(circular_ks(&ens.wrapped(ens.times.len() - 1), reference))
            })
            .collect::<Result<Vec<f64>, VerifyError>>()
    })?
}

/// Circular-KS trend and null check for samples `samples[i]` at
/// `n_values[i]` against `reference`.
pub fn clt_from_samples(
    test: SuiteKind,
    n_values: &[usize],
    samples: &[Vec<f64>],
    reference: &[f64],
    nulls: &[f64],
    null_quantile: f64,
) -> ComparisonReport {
    let mut rep = ComparisonReport::new(test, "circular-ks");
    rep.n_values = n_values.to_vec();
    let mut linear = Vec::new();
    let mut p = Vec::new();
    for x in samples {
        rep.statistics.push(circular_ks(x, reference));
        let (d, pv) = ks_two_sample(x, reference);
        linear.push(d);
        p.push(pv);
    }
    rep.series.insert("ks-linear".into(), linear);
    rep.series.insert("ks-linear-p".into(), p);
    rep.add_trend_check();
    let thr = quantile(nulls, null_quantile);
    rep.null_threshold = Some(thr);
    if let (Some(&n), Some(&d)) = (n_values.last(), rep.statistics.last()) {
        rep.checks.push(Check::below(format!("circular KS at N={n} below null quantile"), d, thr));
    }
    rep.notes.push(format!("null: {} SDE samples of the same size against the reference", nulls.len()));
    rep.notes.push(MARGINALS_NOTE.into());
    rep
}

pub fn clt_report(ctx: &SuiteContext, runs: &CltRuns) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let test = match runs.process {
        Process::Tagged => SuiteKind::TaggedClt,
        _ => SuiteKind::SecondClassClt,
    };
    let reference: Ensemble = with_coefficient(ctx, runs.process, |coef| {
        integrate(&sde_spec(ctx, runs.process, s.reference_paths, derive_seed(s.seed, REFERENCE_SALT)), &runs.field, coef)
    })??;
    let last = reference.times.len() - 1;
    let ref_wrapped = reference.wrapped(last);
    let nulls = clt_null_statistics(ctx, runs.process, &runs.field, &ref_wrapped)?;
    let mut rep = clt_from_samples(test, &runs.n_values, &runs.samples(), &ref_wrapped, &nulls, s.null_quantile);
    let qv: Vec<f64> = runs.records.iter().map(|rs| mean(&rs.iter().map(|r| r.last().qv).collect::<Vec<_>>())).collect();
    let predicted = mean(&reference.predicted_qv[last]);
    let rel = (qv.last().unwrap() / predicted - 1.0).abs();
    rep.checks.push(Check::below(
        format!("quadratic variation at N={} within tolerance", runs.n_values.last().unwrap()),
        rel,
        s.qv_tolerance,
    ));
    rep.series.insert("qv-mean".into(), qv);
    rep.series.insert("qv-predicted".into(), vec![predicted]);
    rep.series.insert("reference-variance".into(), vec![variance(&reference.unwrapped[last])]);
    rep.series.insert(
        "sample-variance".into(),
        runs.samples().iter().map(|x| variance(x)).collect(),
    );
    Ok(rep.finish())
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0).max(1.0)
}

/// Replica-averaged frame profile against the replica-averaged PDE profile
/// shifted by each replica's own displacement, and against the unshifted
/// PDE profile.
pub fn frame_density_report(ctx: &SuiteContext, runs: &CltRuns) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let t = s.horizon;
    let mut rep = ComparisonReport::new(SuiteKind::FrameDensity, "block-l1-shifted");
    let mut unshifted = Vec::new();
    for (rs, &n) in runs.records.iter().zip(&runs.n_values) {
        let emp = mean_profile(rs.iter().map(|r| r.last().profile.as_slice()), n);
        let mut shifted = vec![0.0; n];
        for r in rs {
            let v = site_values(&runs.field, t, n, r.last().rescaled_position(n))?;
            shifted.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        shifted.iter_mut().for_each(|a| *a /= rs.len() as f64);
        rep.n_values.push(n);
        rep.statistics.push(block_l1_fields(&emp, &shifted));
        unshifted.push(block_l1_fields(&emp, &site_values(&runs.field, t, n, 0.0)?));
    }
    let (d, u) = (*rep.statistics.last().unwrap(), *unshifted.last().unwrap());
    let ratio = if d > 0.0 { u / d } else { f64::INFINITY };
    rep.checks.push(Check::above(
        format!("unshifted/shifted L1 at N={}", rep.n_values.last().unwrap()),
        ratio,
        s.frame_factor,
    ));
    rep.series.insert("block-l1-unshifted".into(), unshifted);
    rep.trend_decreasing = super::decreasing_trend(&rep.statistics);
    rep.notes.push(MARGINALS_NOTE.into());
    Ok(rep.finish())
}

fn swapped(p: &ReplacementProbe) -> ReplacementProbe {
    ReplacementProbe { eps_inner: p.eps_outer, eps_outer: p.eps_inner, ..p.clone() }
}

fn replacement_suite(ctx: &SuiteContext) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let main = s.probe.clone();
    let swap = swapped(&main);
    let asym = ReplacementProbe { eps_inner: s.asymmetric_pair.0, eps_outer: s.asymmetric_pair.1, ..main.clone() };
    let asym_swap = swapped(&asym);
    let mut probes = vec![main.clone()];
    for p in [&swap, &asym, &asym_swap] {
        if !probes.contains(p) {
            probes.push(p.clone());
        }
    }
    let mut rep = ComparisonReport::new(SuiteKind::Replacement, "median-discrepancy");
    let mut medians: Vec<Vec<f64>> = vec![Vec::new(); probes.len()];
    for &n in &s.n_values {
        let profile = Profile::constant(s.replacement_density);
        let mut spec = SimulationSpec::new(
            Process::Tagged,
            ctx.g.clone(),
            n,
            s.horizon,
            profile,
            derive_seed(s.seed, process_salt(Process::Tagged, n) ^ 0xEE),
        );
        spec.kernel = ctx.kernel.clone();
        spec.probes = probes.clone();
        let sim = Simulator::new(spec)?;
        let records = sim.run_replicas(0..s.replacement_replicas);
        for (m, p) in medians.iter_mut().zip(&probes) {
            let d = records.iter().map(|r| replacement_discrepancy(r, p)).collect::<Result<Vec<_>, _>>()?;
            m.push(median(&d));
        }
        rep.n_values.push(n);
    }
    let index = |p: &ReplacementProbe| probes.iter().position(|q| q == p).expect("registered");
    rep.statistics = medians[0].clone();
    rep.add_trend_check();
    let n = *rep.n_values.last().expect("validated");
    let last = |p: &ReplacementProbe| *medians[index(p)].last().unwrap();
    let rel = |a: f64, b: f64| if a > 0.0 { (b / a - 1.0).abs() } else { 0.0 };
    rep.checks.push(Check::below(
        format!("swap eps_inner/eps_outer at N={n}"),
        rel(last(&main), last(&swap)),
        s.swap_tolerance,
    ));
    if main == swap {
        rep.notes.push("eps_inner = eps_outer: the swapped probe coincides with the main one".into());
    }
    rep.series.insert("asymmetric-swap-relative-change".into(), vec![rel(last(&asym), last(&asym_swap))]);
    for (p, m) in probes.iter().zip(&medians) {
        rep.series.insert(p.name(), m.clone());
    }
    rep.notes.push(format!(
        "flat density {}, horizon {}, {} replicas; probes share each replica's trajectory",
        s.replacement_density, s.horizon, s.replacement_replicas
    ));
    Ok(rep.finish())
}

fn ensembles_suite(ctx: &SuiteContext) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let (l_small, l_big) = s.ensemble_l;
    let cap = ENUMERATION_CAP as f64;
    let mut k_max = 1;
    while state_count(2 * l_small + 1, k_max + 1, true) <= cap {
        k_max += 1;
    }
    let observables: [(&str, fn(u64) -> f64); 2] =
        [("exp_neg", |k| (-(k as f64)).exp()), ("ind_1", |k| f64::from(u8::from(k == 1)))];
    let mut rep = ComparisonReport::new(SuiteKind::Ensembles, "sup-gap-ratio");
    rep.n_values = vec![l_small, l_big];
    for (name, h) in observables {
        let mut sups = Vec::new();
        for l in [l_small, l_big] {
            let gaps = (1..=k_max)
                .into_par_iter()
                .map(|k| {
                    if state_count(2 * l + 1, k, true) <= cap {
                        ensembles_gap(&ctx.g, l, k, h)
                    } else {
                        ensembles_gap_convolved(&ctx.g, l, k, h)
                    }
                })
                .collect::<Result<Vec<f64>, _>>()?;
            sups.push(gaps.into_iter().fold(0.0, f64::max));
        }
        let ratio = sups[1] / sups[0];
        rep.statistics.push(ratio);
        rep.checks.push(Check::below(format!("{name}: sup gap l={l_big} / l={l_small}"), ratio, s.ensemble_ratio));
        rep.series.insert(format!("{name}:sup"), sups);
    }
    rep.notes.push(format!(
        "k ranges over 1..={k_max}, the particle numbers enumerable at l={l_small}; canonical sides beyond the \
         enumeration cap are computed by exact convolution"
    ));
    Ok(rep.finish())
}

/// The gaps suite plus the lemma table of every rate, keyed by rate label.
pub fn gaps_suite(ctx: &SuiteContext) -> Result<(ComparisonReport, Vec<(String, LemmaReport)>), VerifyError> {
    let s = &ctx.settings;
    let mut rep = ComparisonReport::new(SuiteKind::Gaps, "gap");
    let unit = RateFunction::unit();
    let hand = |l, j, env| -> Result<f64, VerifyError> {
        Ok(spectral_gap_with(&build_generator(&unit, &ctx.kernel, l, j, env)?, GapMethod::Dense)?.w)
    };
    rep.checks.push(Check::below("|W(1,1) - 2|", (hand(1, 1, false)? - 2.0).abs(), 1e-10));
    rep.checks.push(Check::below("|W_env(1,2) - 2|", (hand(1, 2, true)? - 2.0).abs(), 1e-10));
    let mut tables = Vec::new();
    for g in &ctx.rates {
        let lemmas = verify_gap_lemmas(g, &ctx.kernel, 1..=s.gap_l_max, 1..=s.gap_j_max)?;
        let failures = lemmas.rows.iter().filter(|r| !r.pass).count();
        rep.checks.push(Check::below(format!("{}: lemma violations", g.label()), failures as f64, 0.0));
        for r in &lemmas.rows {
            rep.series.entry(format!("{}:W:l={}", g.label(), r.l)).or_default().push(r.w);
            rep.series.entry(format!("{}:W_env:l={}", g.label(), r.l)).or_default().push(r.w_env);
            rep.series.entry(format!("{}:rhs:l={}", g.label(), r.l)).or_default().push(r.lemma0_rhs);
        }
        for (alpha, b) in &lemmas.b_alpha {
            rep.series.insert(format!("{}:B_alpha={alpha}", g.label()), vec![*b]);
        }
        if g.is_unit() {
            let rows: Vec<_> = lemmas.rows.iter().filter(|r| r.l == s.gap_trend_l && r.j >= 2).cloned().collect();
            let e = fit_gap_exponent(&rows, s.gap_trend_l).unwrap_or(f64::NAN);
            let (lo, hi) = s.gap_exponent_range;
            rep.checks.push(Check {
                name: format!("gap exponent of (1+rho) at l={}", s.gap_trend_l),
                value: e,
                bound: hi,
                pass: e >= lo && e <= hi,
            });
            rep.n_values = rows.iter().map(|r| r.j as usize).collect();
            rep.statistics = rows.iter().map(|r| 1.0 / r.w).collect();
            for c in claim_l1_table(g, &lemmas, &[1e3, 1e4, 1e5], 1.0) {
                rep.series.entry(format!("claim-l1:l={}", c.l)).or_default().push(c.max_ratio);
            }
        }
        tables.push((g.label(), lemmas));
    }
    rep.notes.push(format!(
        "statistics: unit-rate gap 1/W at l={} for j in n_values; the fitted exponent of (1+rho) in 1/W is \
         compared with {:?}",
        s.gap_trend_l, s.gap_exponent_range
    ));
    Ok((rep.finish(), tables))
}

/// Pooled chi-square of the frame marginals: origin against the Palm (or
/// kappa) law, every other site against the grand-canonical law.
fn frame_chi_square(records: &[TrajectoryRecord], origin: &MarginalTable, bulk: &MarginalTable) -> f64 {
    let mut o = Vec::new();
    let mut b = Vec::new();
    let bump = |v: &mut Vec<u64>, k: u32| {
        let k = k as usize;
        if v.len() <= k {
            v.resize(k + 1, 0);
        }
        v[k] += 1;
    };
    for r in records {
        let p = &r.last().profile;
        bump(&mut o, p[0]);
        p[1..].iter().for_each(|&k| bump(&mut b, k));
    }
    let a = chi_square_gof(&o, origin.probabilities());
    let c = chi_square_gof(&b, bulk.probabilities());
    combine_chi_square(&[a, c]).p
}

fn invariance_suite(ctx: &SuiteContext) -> Result<ComparisonReport, VerifyError> {
    let s = &ctx.settings;
    let mut rep = ComparisonReport::new(SuiteKind::Invariance, "seeds-passing");
    rep.n_values = vec![s.invariance_n];
    for g in &ctx.rates {
        let processes: &[Process] = if g.is_unit() { &[Process::Tagged, Process::SecondClass] } else { &[Process::Tagged] };
        for &process in processes {
            for &rho in &s.invariance_densities {
                let origin = match process {
                    Process::SecondClass => MarginalTable::kappa(g, rho)?,
                    _ => MarginalTable::palm(g, rho)?,
                };
                let bulk = MarginalTable::grand_canonical(g, rho)?;
                let ps = (0..s.invariance_seeds)
                    .map(|seed| {
                        let mut spec = SimulationSpec::new(
                            process,
                            g.clone(),
                            s.invariance_n,
                            s.invariance_horizon,
                            Profile::constant(rho),
                            derive_seed(s.seed, 0x1A00 + seed),
                        );
                        spec.kernel = ctx.kernel.clone();
                        let sim = Simulator::new(spec)?;
                        Ok(frame_chi_square(&sim.run_replicas(0..s.invariance_replicas), &origin, &bulk))
                    })
                    .collect::<Result<Vec<f64>, VerifyError>>()?;
                let passing = ps.iter().filter(|&&p| p > s.invariance_p_min).count() as f64;
                let name = format!("{}:{}:rho={rho}", g.label(), process_name(process));
                rep.checks.push(Check::above(format!("{name}: seeds with p > {}", s.invariance_p_min), passing, s.invariance_min_pass as f64));
                rep.statistics.push(passing);
                rep.series.insert(format!("{name}:p"), ps);
            }
        }
    }
    rep.notes.push(format!(
        "{} replicas per seed from the stationary frame law, N={}, T={}",
        s.invariance_replicas, s.invariance_n, s.invariance_horizon
    ));
    Ok(rep.finish())
}

fn process_name(p: Process) -> &'static str {
    match p {
        Process::Bulk => "bulk",
        Process::Tagged => "tagged",
        Process::SecondClass => "second-class",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_values: Vec<usize>) -> SuiteContext {
        let settings = VerifySettings {
            n_values,
            null_runs: 20,
            hydro_replicas: 40,
            clt_replicas: 200,
            reference_paths: 4000,
            replacement_replicas: 30,
            ..VerifySettings::default()
        };
        SuiteContext::new(RateFunction::unit(), JumpKernel::nearest_neighbor(), settings)
    }

    #[test]
    fn hydro_single_n_is_insufficient() {
        let rep = run_suite(SuiteKind::Hydro, &small(vec![32])).unwrap();
        assert!(!rep.pass);
        assert!(rep.notes.iter().any(|n| n == "insufficient trend points"));
        assert_eq!(rep.trend_decreasing, None);
    }

    #[test]
    fn clt_self_test_passes() {
        // both sides from the SDE: the sample at the largest N is below the
        // null quantile and its linear KS p-value is not small
        let ctx = small(vec![64]);
        let runs = simulate_clt(&ctx, Process::Tagged).unwrap();
        let reference = with_coefficient(&ctx, Process::Tagged, |c| {
            integrate(&sde_spec(&ctx, Process::Tagged, 4000, 1), &runs.field, c)
        })
        .unwrap()
        .unwrap();
        let refw = reference.wrapped(reference.times.len() - 1);
        let nulls = clt_null_statistics(&ctx, Process::Tagged, &runs.field, &refw).unwrap();
        let own = with_coefficient(&ctx, Process::Tagged, |c| {
            integrate(&sde_spec(&ctx, Process::Tagged, 200, 99), &runs.field, c)
        })
        .unwrap()
        .unwrap();
        let rep = clt_from_samples(SuiteKind::TaggedClt, &[64], &[own.wrapped(own.times.len() - 1)], &refw, &nulls, 0.99);
        assert!(rep.checks.iter().find(|c| c.name.contains("null")).unwrap().pass);
        assert!(rep.series["ks-linear-p"][0] > 0.01);
    }

    #[test]
    fn reports_are_deterministic() {
        let ctx = small(vec![16, 24]);
        let a = run_suite(SuiteKind::Replacement, &ctx).unwrap();
        let b = run_suite(SuiteKind::Replacement, &ctx).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.statistics.len(), 2);
    }

    #[test]
    fn block_l1_of_equal_fields_is_zero() {
        let a: Vec<f64> = (0..37).map(|i| i as f64).collect();
        assert_eq!(block_l1_fields(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!((block_l1_fields(&a, &b) - 0.5).abs() < 1e-12);
    }
}
