//! Full-scale acceptance run. Prints one line per criterion and fails if any
//! criterion fails. Expect tens of minutes on a single core.

use std::time::Instant;

use zrp::experiment::{run_experiment, ExperimentConfig, MANIFEST};
use zrp::sim::Process;
use zrp::verify::{
    clt_report, frame_density_report, gaps_suite, run_suite, simulate_clt, Check, ComparisonReport, SuiteContext,
    SuiteKind, VerifySettings,
};
use zrp::{JumpKernel, RateFunction};

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check<'a>(rep: &'a ComparisonReport, prefix: &str) -> &'a Check {
    rep.checks.iter().find(|c| c.name.starts_with(prefix)).unwrap_or_else(|| panic!("no check {prefix:?} in {:?}", rep.test))
}

fn budget(detail: &mut String, seconds: f64, limit: f64) -> bool {
    detail.push_str(&format!("; {seconds:.0}s of {limit:.0}s"));
    seconds <= limit
}

fn context() -> SuiteContext {
    SuiteContext::new(RateFunction::unit(), JumpKernel::nearest_neighbor(), VerifySettings::default())
}

fn invariance(ctx: &SuiteContext) -> Line {
    let rep = run_suite(SuiteKind::Invariance, ctx).unwrap();
    let worst = rep.checks.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let mut detail = format!("{} cases, fewest passing seeds {worst}/20 (need 18)", rep.checks.len());
    let t = budget(&mut detail, rep.runtime, 120.0);
    Line { name: "exact invariance (Palm/kappa)", pass: rep.pass && t, detail }
}

fn gaps(ctx: &SuiteContext) -> [Line; 2] {
    let start = Instant::now();
    let (rep, _) = gaps_suite(ctx).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let hand = [check(&rep, "|W(1,1) - 2|"), check(&rep, "|W_env(1,2) - 2|")];
    let lemma: Vec<&Check> = rep.checks.iter().filter(|c| c.name.ends_with("lemma violations")).collect();
    let mut d1 = format!(
        "violations {} over unit and pow:0.5; |W(1,1)-2| = {:.1e}, |W_env(1,2)-2| = {:.1e}",
        lemma.iter().map(|c| c.value).sum::<f64>(),
        hand[0].value,
        hand[1].value
    );
    let pass1 = lemma.len() == 2 && lemma.iter().all(|c| c.pass) && hand.iter().all(|c| c.pass);
    let t1 = budget(&mut d1, secs, 60.0);
    let exp = check(&rep, "gap exponent");
    let mut d2 = format!("exponent {:.3}, required [-3, -1]", exp.value);
    let t2 = budget(&mut d2, secs, 120.0);
    [
        Line { name: "spectral lemma exactness", pass: pass1 && t1, detail: d1 },
        Line { name: "gap scaling trend", pass: exp.pass && t2, detail: d2 },
    ]
}

fn hydro(ctx: &SuiteContext) -> Line {
    let rep = run_suite(SuiteKind::Hydro, ctx).unwrap();
    let mut detail = format!(
        "block L1 {:?}, null q99 {:.4}, decreasing {:?}",
        rep.statistics.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        rep.null_threshold.unwrap_or(f64::NAN),
        rep.trend_decreasing
    );
    let t = budget(&mut detail, rep.runtime, 600.0);
    Line { name: "hydrodynamics", pass: rep.pass && t, detail }
}

fn clt_lines(name: &'static str, rep: &ComparisonReport, secs: f64) -> Line {
    let qv = check(rep, "quadratic variation");
    let mut detail = format!(
        "circular KS {:?}, null q99 {:.4}, decreasing {:?}, QV error {:.2}%",
        rep.statistics.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        rep.null_threshold.unwrap_or(f64::NAN),
        rep.trend_decreasing,
        100.0 * qv.value
    );
    let t = budget(&mut detail, secs, 1800.0);
    Line { name, pass: rep.pass && t, detail }
}

fn tagged(ctx: &SuiteContext) -> [Line; 2] {
    let start = Instant::now();
    let runs = simulate_clt(ctx, Process::Tagged).unwrap();
    let clt = clt_report(ctx, &runs).unwrap();
    let frame = frame_density_report(ctx, &runs).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ratio = check(&frame, "unshifted/shifted");
    let mut detail = format!("unshifted/shifted L1 at N=256 = {:.2}, required >= 2", ratio.value);
    let t = budget(&mut detail, secs, 1800.0);
    [clt_lines("tagged CLT", &clt, secs), Line { name: "frame density", pass: frame.pass && t, detail }]
}

fn second_class(ctx: &SuiteContext) -> Line {
    let rep = run_suite(SuiteKind::SecondClassClt, ctx).unwrap();
    clt_lines("second-class CLT", &rep, rep.runtime)
}

fn replacement(ctx: &SuiteContext) -> Line {
    let rep = run_suite(SuiteKind::Replacement, ctx).unwrap();
    let swap = check(&rep, "swap");
    let mut detail = format!(
        "median discrepancy {:?}, decreasing {:?}, swap change {:.1}%",
        rep.statistics.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>(),
        rep.trend_decreasing,
        100.0 * swap.value
    );
    let t = budget(&mut detail, rep.runtime, 600.0);
    Line { name: "replacement estimate", pass: rep.pass && t, detail }
}

fn ensembles(ctx: &SuiteContext) -> Line {
    let rep = run_suite(SuiteKind::Ensembles, ctx).unwrap();
    let ratios: Vec<String> = rep.checks.iter().map(|c| format!("{} {:.3}", c.name, c.value)).collect();
    let mut detail = format!("{}; limit 0.7", ratios.join(", "));
    let t = budget(&mut detail, rep.runtime, 300.0);
    Line { name: "equivalence of ensembles", pass: rep.pass && t, detail }
}

const DETERMINISM: &str = r#"
[model]
g = "unit"
[scale]
N = [32, 64]
T = 0.02
M = 256
[run]
process = "tagged"
replicas = 20
seed = 7
checkpoints = [0.01]
[verify]
suites = ["ensembles", "gaps", "hydro"]
hydro_replicas = 10
null_runs = 10
gap_l_max = 2
gap_j_max = 6
"#;

fn determinism(ctx: &SuiteContext) -> Line {
    let (cfg, res) = ExperimentConfig::from_toml_str(DETERMINISM, None).unwrap();
    let root = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, &res, &root.path().join("a"), &|_| {}).unwrap();
    let b = run_experiment(&cfg, &res, &root.path().join("b"), &|_| {}).unwrap();
    let same_manifest = std::fs::read(a.dir.join(MANIFEST)).unwrap() == std::fs::read(b.dir.join(MANIFEST)).unwrap();
    let full = |k| serde_json::to_vec(&run_suite(k, ctx).unwrap()).unwrap();
    let same_suite = full(SuiteKind::Ensembles) == full(SuiteKind::Ensembles);
    Line {
        name: "determinism",
        pass: same_manifest && same_suite,
        detail: format!("experiment manifests identical: {same_manifest}; full-scale ensembles report identical: {same_suite}"),
    }
}

#[test]
fn acceptance() {
    let ctx = context();
    let mut lines = vec![invariance(&ctx)];
    lines.extend(gaps(&ctx));
    lines.push(hydro(&ctx));
    lines.extend(tagged(&ctx));
    lines.push(second_class(&ctx));
    lines.push(replacement(&ctx));
    lines.push(ensembles(&ctx));
    lines.push(determinism(&ctx));
    println!();
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
