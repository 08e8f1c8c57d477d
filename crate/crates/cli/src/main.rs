use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use zrp::diffusion::{integrate, Coefficient, CoefficientFn, DiffusionSpec};
use zrp::experiment::{
    export_plot_inputs, load_config, output_dir, run_experiment, ExperimentError, EXIT_ACCEPTANCE, EXIT_CONFIG,
    EXIT_IO, EXIT_NUMERICAL, EXIT_OK,
};
use zrp::hydro::{flux_for_profile, solve, DensityField, HydroSpec};
use zrp::io::csv::{write_gap_csv, GapCsvRow};
use zrp::io::ndjson::{write_lines, SdeLine, TrajectoryLine};
use zrp::io::spec::{parse_kernel, parse_profile, parse_range, parse_rate, parse_times, SpecError};
use zrp::measures::{Flux, MarginalKind, MarginalTable, ProductKind, ProductSampler};
use zrp::rng::{stream, Purpose};
use zrp::sim::{OriginObservable, Process, SimulationSpec, Simulator};
use zrp::spectral::{build_generator_on, spectral_gap, verify_gap_lemmas, Region};
use zrp::verify::{gaps_suite, run_suite, SuiteContext, SuiteKind, VerifySettings};
use zrp::{JumpKernel, RateFunction};

#[derive(Parser)]
#[command(name = "zrp", version, about = "Zero-range process simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicas of the bulk, tagged or second-class process.
    Simulate(SimulateArgs),
    /// Solve the hydrodynamic equation.
    Hydro(HydroArgs),
    /// Integrate the limit diffusion on a solved density field.
    Sde(SdeArgs),
    /// Spectral gaps of canonical generators.
    Gap(GapArgs),
    /// Draw configurations from invariant product measures.
    Sample(SampleArgs),
    /// Run verification suites.
    Verify(VerifyArgs),
    /// Write plot-ready tables from a finished experiment directory.
    PlotExport(PlotExportArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// unit | pow:GAMMA | table:FILE | table[v0,v1,...]
    #[arg(long, default_value = "unit")]
    g: String,
    /// nn | z:w,z:w,...
    #[arg(long, default_value = "nn")]
    p: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessArg {
    Bulk,
    Tagged,
    SecondClass,
}

impl From<ProcessArg> for Process {
    fn from(p: ProcessArg) -> Self {
        match p {
            ProcessArg::Bulk => Process::Bulk,
            ProcessArg::Tagged => Process::Tagged,
            ProcessArg::SecondClass => Process::SecondClass,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Run a full experiment from a TOML config instead of a single sweep.
    #[arg(long, conflicts_with_all = ["out"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tagged")]
    process: ProcessArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N", default_value_t = 64)]
    n: usize,
    #[arg(long = "T", default_value_t = 0.1)]
    t: f64,
    /// const:RHO | sine:MEAN,AMP
    #[arg(long, default_value = "sine:1,0.5")]
    rho0: String,
    #[arg(long, default_value_t = 100)]
    replicas: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated macroscopic times.
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HydroArgs {
    /// Rate function whose flux drives the equation.
    #[arg(long, default_value = "unit")]
    flux: String,
    #[arg(long, default_value = "nn")]
    p: String,
    #[arg(long, default_value = "sine:1,0.5")]
    rho0: String,
    #[arg(long = "M", default_value_t = 1024)]
    m: usize,
    #[arg(long = "T", default_value_t = 0.1)]
    t: f64,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoefArg {
    Psi,
    Chi,
}

#[derive(Args)]
struct SdeArgs {
    #[arg(long, value_enum)]
    coef: CoefArg,
    /// Field CSV written by `hydro`.
    #[arg(long)]
    field: PathBuf,
    /// Rate function for `psi`; must match the field's flux.
    #[arg(long, default_value = "unit")]
    g: String,
    #[arg(long, default_value = "nn")]
    p: String,
    #[arg(long = "T")]
    t: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    replicas: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GapArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "1..3")]
    l_range: String,
    #[arg(long, default_value = "1..6")]
    j_range: String,
    /// Environment gaps with the lemma comparison against W(l, j-1).
    #[arg(long, conflicts_with = "two_block")]
    env: bool,
    /// Two blocks of 2l+1 sites joined by one edge.
    #[arg(long)]
    two_block: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    /// Grand-canonical product measure.
    Mu,
    /// Palm marginal at the origin, tagged particle placed there.
    Nu,
    /// Second-class origin marginal, unit rate only.
    Kappa,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "mu")]
    measure: MeasureArg,
    #[arg(long = "N", default_value_t = 64)]
    n: usize,
    #[arg(long, default_value = "const:1")]
    rho0: String,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the origin marginal at this density as CSV (k,pmf,cdf).
    #[arg(long, requires = "marginal_out")]
    marginal_rho: Option<f64>,
    #[arg(long)]
    marginal_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name, or `all`.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Experiment TOML; its `[verify]` table and model sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for gap tables when the gaps suite runs.
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Args)]
struct PlotExportArgs {
    /// Experiment directory containing manifest.json.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("acceptance failure: {0}")]
    Acceptance(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Spec(_) | CliError::Config(_) => EXIT_CONFIG,
            CliError::Experiment(e) => e.exit_code(),
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn progress(msg: &str) {
    eprintln!("zrp: {msg}");
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).and_then(|_| w.flush()).map_err(io)
}

fn model(args: &ModelArgs) -> Result<(RateFunction, JumpKernel), CliError> {
    Ok((parse_rate(&args.g, None)?, parse_kernel(&args.p)?))
}

fn times(s: &Option<String>) -> Result<Vec<f64>, CliError> {
    Ok(s.as_deref().map(parse_times).transpose()?.unwrap_or_default())
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    if let Some(path) = &a.config {
        let (cfg, res) = load_config(path)?;
        let dir = output_dir(&cfg);
        let out = run_experiment(&cfg, &res, &dir, &progress)?;
        progress(&format!("wrote {}", out.dir.display()));
        if !out.all_pass() {
            return Err(CliError::Acceptance("a verification suite failed".into()));
        }
        return Ok(());
    }
    let out = a.out.clone().ok_or_else(|| config("either --config or --out is required"))?;
    let (g, kernel) = model(&a.model)?;
    let process = Process::from(a.process);
    let mut spec = SimulationSpec::new(process, g, a.n, a.t, parse_profile(&a.rho0)?, a.seed);
    spec.kernel = kernel;
    spec.checkpoints = times(&a.checkpoints)?;
    if process != Process::Bulk {
        spec.observables = vec![OriginObservable::PerParticleRate];
    }
    let sim = Simulator::new(spec).map_err(config)?;
    progress(&format!("simulating {} replicas at N={}", a.replicas, a.n));
    let records = sim.run_replicas(0..a.replicas);
    let lines: Vec<TrajectoryLine> = records.iter().flat_map(TrajectoryLine::from_record).collect();
    write_file(&out, |w| write_lines(w, &lines))
}

fn hydro(a: HydroArgs) -> Result<(), CliError> {
    let g = parse_rate(&a.flux, None)?;
    let kernel = parse_kernel(&a.p)?;
    let profile = parse_profile(&a.rho0)?;
    let flux = flux_for_profile(&g, &profile).map_err(numerical)?;
    let mut spec = HydroSpec::new(kernel.sigma2(), a.t, a.m);
    spec.checkpoints = times(&a.checkpoints)?;
    let field = solve(&profile, &flux, &spec).map_err(numerical)?;
    write_file(&a.out, |w| field.write_csv(w))
}

fn sde(a: SdeArgs) -> Result<(), CliError> {
    let kernel = parse_kernel(&a.p)?;
    let io = |source| CliError::Io { path: a.field.display().to_string(), source };
    let input = BufReader::new(File::open(&a.field).map_err(io)?);
    let field = DensityField::read_csv(input, kernel.sigma2()).map_err(config)?;
    let coefficient = match a.coef {
        CoefArg::Psi => Coefficient::TaggedPsi,
        CoefArg::Chi => Coefficient::SecondClassChi,
    };
    let spec = DiffusionSpec {
        coefficient,
        sigma2: kernel.sigma2(),
        dt: a.dt.unwrap_or(a.t / 1000.0),
        horizon: a.t,
        replicas: a.replicas,
        seed: a.seed,
        checkpoints: times(&a.checkpoints)?,
    };
    let flux: Flux;
    let coef = match a.coef {
        CoefArg::Psi => {
            let g = parse_rate(&a.g, None)?;
            let rho_max = field.max_density();
            flux = Flux::new(&g, (4.0 * rho_max).max(1.0)).map_err(numerical)?;
            CoefficientFn::Psi(&flux)
        }
        CoefArg::Chi => CoefficientFn::Chi,
    };
    let ens = integrate(&spec, &field, &coef).map_err(numerical)?;
    write_file(&a.out, |w| write_lines(w, &SdeLine::from_ensemble(&ens)))
}

fn gap(a: GapArgs) -> Result<(), CliError> {
    let (g, kernel) = model(&a.model)?;
    let (llo, lhi) = parse_range(&a.l_range)?;
    let (jlo, jhi) = parse_range(&a.j_range)?;
    let ls = llo as usize..=lhi as usize;
    let js = u32::try_from(jlo).map_err(config)?..=u32::try_from(jhi).map_err(config)?;
    let rows: Vec<GapCsvRow> = if a.env {
        let rep = verify_gap_lemmas(&g, &kernel, ls, js).map_err(numerical)?;
        if !rep.all_pass {
            progress("lemma comparison failed on at least one row");
        }
        rep.rows.iter().flat_map(GapCsvRow::pair_from_lemma).collect()
    } else {
        let mut rows = Vec::new();
        for l in ls {
            for j in js.clone() {
                let region = if a.two_block { Region::TwoBlock { l } } else { Region::Cube { l } };
                let genr = build_generator_on(&g, &kernel, region, j, false).map_err(numerical)?;
                let rep = spectral_gap(&genr).map_err(numerical)?;
                rows.push(GapCsvRow { l, j, states: rep.states, w: rep.w, env: false, lemma: None });
            }
        }
        rows
    };
    write_file(&a.out, |w| write_gap_csv(w, &rows))
}

fn sample(a: SampleArgs) -> Result<(), CliError> {
    let (g, _) = model(&a.model)?;
    let profile = parse_profile(&a.rho0)?;
    let (kind, marginal) = match a.measure {
        MeasureArg::Mu => (ProductKind::Bulk, MarginalKind::GrandCanonical),
        MeasureArg::Nu => (ProductKind::TaggedPalmAtOrigin, MarginalKind::Palm),
        MeasureArg::Kappa => (ProductKind::SecondClassKappa, MarginalKind::SecondClassKappaOrigin),
    };
    if matches!(a.measure, MeasureArg::Kappa) && !g.is_unit() {
        return Err(config("the second-class measure requires --g unit"));
    }
    let sampler = ProductSampler::new(&g, &profile, a.n, kind).map_err(numerical)?;
    let configs: Vec<_> = (0..a.count)
        .map(|i| {
            let mut rng = stream(a.seed, Purpose::Initial, i);
            sampler.sample(&mut rng)
        })
        .collect();
    write_file(&a.out, |w| write_lines(w, &configs))?;
    if let (Some(rho), Some(path)) = (a.marginal_rho, &a.marginal_out) {
        let table = MarginalTable::new(&g, rho, marginal).map_err(numerical)?;
        write_file(path, |w| table.write_csv(w))?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let kinds: Vec<SuiteKind> = if a.suite == "all" {
        SuiteKind::ALL.to_vec()
    } else {
        a.suite
            .split(',')
            .map(|s| SuiteKind::parse(s.trim()).ok_or_else(|| config(format!("unknown suite {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    let ctx = match &a.config {
        Some(path) => {
            let (cfg, res) = load_config(path)?;
            SuiteContext::new(res.g, res.kernel, cfg.verify_settings(res.profile))
        }
        None => SuiteContext::new(RateFunction::unit(), JumpKernel::nearest_neighbor(), VerifySettings::default()),
    };
    let mut reports = Vec::new();
    for kind in kinds {
        progress(&format!("running suite {}", kind.name()));
        let rep = if kind == SuiteKind::Gaps {
            let (rep, tables) = gaps_suite(&ctx).map_err(numerical)?;
            if let Some(dir) = &a.tables {
                for (label, t) in tables {
                    let rows: Vec<GapCsvRow> = t.rows.iter().flat_map(GapCsvRow::pair_from_lemma).collect();
                    let path = dir.join(format!("gaps_{}.csv", zrp::experiment::sanitize(&label)));
                    write_file(&path, |w| write_gap_csv(w, &rows))?;
                }
            }
            rep
        } else {
            run_suite(kind, &ctx).map_err(numerical)?
        };
        progress(&format!("{}: {} ({:.1}s)", kind.name(), if rep.pass { "pass" } else { "FAIL" }, rep.runtime));
        reports.push(rep);
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.test.name()).collect();
    write_file(&a.out, |w| {
        if reports.len() == 1 {
            serde_json::to_writer_pretty(&mut *w, &reports[0])?;
        } else {
            serde_json::to_writer_pretty(&mut *w, &reports)?;
        }
        w.write_all(b"\n")
    })?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failed.join(", ")))
    }
}

fn plot_export(a: PlotExportArgs) -> Result<(), CliError> {
    let files = export_plot_inputs(&a.manifest, &a.out)?;
    progress(&format!("wrote {} tables to {}", files.len(), a.out.display()));
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    if let Some(v) = std::env::var_os("ZRP_THREADS") {
        let n: usize = v
            .to_string_lossy()
            .parse()
            .map_err(|_| config(format!("ZRP_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(config)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Hydro(a) => hydro(a),
        Command::Sde(a) => sde(a),
        Command::Gap(a) => gap(a),
        Command::Sample(a) => sample(a),
        Command::Verify(a) => verify(a),
        Command::PlotExport(a) => plot_export(a),
    });
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("zrp: error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
