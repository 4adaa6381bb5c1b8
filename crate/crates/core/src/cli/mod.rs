//! Command-line front end. Every subcommand reads one TOML config, writes
//! CSV (and SVG) artifacts plus a `manifest.toml` into the output directory,
//! and is byte-for-byte reproducible given the config and seed.

pub mod config;
pub mod svg;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{
    asym_var_one, asym_var_two, asym_var_two_optimal_limit, dunkl_k_from_theta, estimate,
    optimal_limit_improvement, two_eigen_limit, EstimatingFunctionSpec, JumpActivity,
};
use crate::model::{fmt_shortest, EstimationResult, EstimatorKind, ModelParams, ObservationSeries, SamplingScheme, StateSpace};
use crate::montecarlo::{figure1_experiment, with_thread_cap, write_report_csv, ExperimentConfig, Figure1Row};
use crate::process::{
    bessel_to_modified, exponential_grid, sample_bessel_path, sample_modified_path, simulate_dunkl_series,
    DunklParams,
};
use crate::special::RandomSource;

use config::{invalid, specs, FileConfig, PathKind};
use svg::{line_chart, Marker, Series};

/// Caps worker threads; unset or 0 lets the runtime decide.
pub const THREADS_ENV: &str = "BESSEL_MEF_THREADS";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(
    name = "bessel-mef",
    version,
    about = "Exact simulation and martingale estimation for Bessel-type diffusions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate a modified Bessel, raw Bessel or Dunkl path.
    Simulate(RunArgs),
    /// Estimate θ from a series CSV with each requested estimator.
    Estimate(RunArgs),
    /// Information-versus-Δ Monte Carlo experiment with an SVG plot.
    Experiment(RunArgs),
    /// Analytic asymptotic-variance table over (θ, Δ) grids.
    VarianceTable(RunArgs),
    /// Simulate a Dunkl path through its modulus and recover k.
    DunklDemo(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed from the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Experiment(_) => "experiment",
            Command::VarianceTable(_) => "variance-table",
            Command::DunklDemo(_) => "dunkl-demo",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Estimate(a)
            | Command::Experiment(a)
            | Command::VarianceTable(a)
            | Command::DunklDemo(a) => a,
        }
    }
}

/// Resolved inputs shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: FileConfig,
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    pub fn load(args: &RunArgs) -> Result<Self> {
        let config = FileConfig::load(&args.config)?;
        let seed = config.resolve_seed(args.seed);
        std::fs::create_dir_all(&args.out)?;
        Ok(Self {
            config,
            config_dir: args
                .config
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
            out: args.out.clone(),
            seed,
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    fn manifest<T: Serialize>(&self, subcommand: &str, outputs: &[&str], section: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, T: Serialize> {
            tool: &'static str,
            version: &'static str,
            subcommand: &'a str,
            seed: u64,
            outputs: &'a [&'a str],
            config: &'a T,
        }
        let text = toml::to_string(&Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed: self.seed,
            outputs,
            config: section,
        })
        .map_err(|e| Error::Io(e.to_string()))?;
        let mut w = self.create(MANIFEST_FILE)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse().map_err(|_| Error::Config {
            message: format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"),
        }),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(Error::Config {
            message: format!("{THREADS_ENV}: {e}"),
        }),
    }
}

/// Runs one subcommand and returns the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    let threads = thread_cap()?;
    let ctx = Context::load(cli.command.args())?;
    let command = cli.command.clone();
    with_thread_cap(threads, move || match command {
        Command::Simulate(_) => cmd_simulate(&ctx),
        Command::Estimate(_) => cmd_estimate(&ctx),
        Command::Experiment(_) => cmd_experiment(&ctx),
        Command::VarianceTable(_) => cmd_variance_table(&ctx),
        Command::DunklDemo(_) => cmd_dunkl_demo(&ctx),
    })?
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_series(ctx: &Context, name: &str, series: &ObservationSeries) -> Result<()> {
    let mut w = ctx.create(name)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub const SERIES_FILE: &str = "series.csv";
pub const BESSEL_PATH_FILE: &str = "bessel_path.csv";

pub fn cmd_simulate(ctx: &Context) -> Result<i32> {
    let sec = &ctx.config.simulate;
    let inv = |e| invalid("simulate", e);
    let scheme = SamplingScheme::new(sec.delta, sec.n).map_err(inv)?;
    let mut rng = RandomSource::new(ctx.seed);
    let mut outputs = vec![];
    match sec.kind {
        PathKind::Modified => {
            let p = ModelParams::new(sec.theta, sec.alpha).map_err(inv)?;
            let series = sample_modified_path(&p, &scheme, sec.x0, &mut rng)?;
            write_series(ctx, SERIES_FILE, &series)?;
            outputs.push(SERIES_FILE);
        }
        PathKind::Bessel => {
            let p = ModelParams::new(sec.theta, sec.alpha).map_err(inv)?;
            let grid = exponential_grid(sec.alpha, &scheme).map_err(inv)?;
            let path = sample_bessel_path(sec.theta, &grid, sec.x0, &mut rng)?;
            let mut w = ctx.create(BESSEL_PATH_FILE)?;
            path.write_csv(&mut w)?;
            w.flush()?;
            outputs.push(BESSEL_PATH_FILE);
            if sec.transform {
                let series = bessel_to_modified(path.values(), &p, &scheme)?;
                write_series(ctx, SERIES_FILE, &series)?;
                outputs.push(SERIES_FILE);
            }
        }
        PathKind::Dunkl => {
            let d = DunklParams::new(sec.k).map_err(inv)?;
            let sim = simulate_dunkl_series(&d, sec.alpha, &scheme, sec.x0, sec.substeps, &mut rng)
                .map_err(|e| match e {
                    Error::InvalidArgument { .. } | Error::OverflowHorizon { .. } | Error::NonPositiveAlpha { .. } => {
                        inv(e)
                    }
                    other => other,
                })?;
            write_series(ctx, SERIES_FILE, &sim.series)?;
            let mut w = ctx.create(BESSEL_PATH_FILE)?;
            sim.bessel_path.write_csv(&mut w)?;
            w.flush()?;
            outputs.extend([SERIES_FILE, BESSEL_PATH_FILE]);
        }
    }
    ctx.manifest("simulate", &outputs, sec)?;
    for o in &outputs {
        println!("wrote {}", ctx.out.join(o).display());
    }
    Ok(0)
}

pub const ESTIMATES_FILE: &str = "estimates.csv";

fn estimate_rows(
    series: &ObservationSeries,
    alpha: f64,
    specs: &[EstimatingFunctionSpec],
    bracket: &crate::estimate::RootBracket,
) -> (Vec<EstimationResult>, i32) {
    let mut code = 0;
    let rows = specs
        .iter()
        .map(|spec| match estimate(series, alpha, spec, bracket) {
            Ok(r) => {
                if !r.converged {
                    eprintln!("{}: {}", spec.kind, Error::EstimateOutOfRange { theta_hat: r.theta_hat });
                }
                r
            }
            Err(e) => {
                eprintln!("{}: {e}", spec.kind);
                code = code.max(e.exit_code());
                EstimationResult {
                    theta_hat: f64::NAN,
                    variant: spec.kind,
                    asymptotic_variance: f64::NAN,
                    iterations: 0,
                    converged: false,
                }
            }
        })
        .collect();
    (rows, code)
}

fn write_estimates(ctx: &Context, name: &str, rows: &[EstimationResult], dunkl: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(ctx.create(name)?);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header: Vec<&str> = EstimationResult::CSV_HEADER.to_vec();
    if dunkl {
        header.extend(["k_hat", "activity"]);
    }
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec: Vec<String> = r.csv_record().to_vec();
        if dunkl {
            let mapped = dunkl_k_from_theta(r.theta_hat).ok().filter(|_| r.converged);
            rec.push(fmt_shortest(r.theta_hat + 0.5));
            rec.push(match mapped {
                Some((_, JumpActivity::Finite)) => "finite".into(),
                Some((_, JumpActivity::Infinite)) => "infinite".into(),
                None => String::new(),
            });
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_estimate(ctx: &Context) -> Result<i32> {
    let sec = &ctx.config.estimate;
    let inv = |e| invalid("estimate", e);
    if sec.variants.is_empty() {
        return Err(Error::Config {
            message: "[estimate]: variants must not be empty".into(),
        });
    }
    if !(sec.alpha > 0.0 && sec.alpha.is_finite()) {
        return Err(inv(Error::NonPositiveAlpha { alpha: sec.alpha }));
    }
    let bracket = sec.bracket()?;
    let input = if sec.input.is_absolute() {
        sec.input.clone()
    } else {
        ctx.config_dir.join(&sec.input)
    };
    let file = File::open(&input).map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
    let state = if sec.dunkl { StateSpace::Signed } else { StateSpace::Positive };
    let series = ObservationSeries::read_csv(std::io::BufReader::new(file), state)?;
    let (rows, code) = estimate_rows(&series, sec.alpha, &specs(&sec.variants, sec.beta1, sec.beta2), &bracket);
    write_estimates(ctx, ESTIMATES_FILE, &rows, sec.dunkl)?;
    ctx.manifest("estimate", &[ESTIMATES_FILE], sec)?;
    for r in &rows {
        println!("{:<10} theta_hat = {}", r.variant.as_str(), fmt_shortest(r.theta_hat));
    }
    Ok(code)
}

pub const FIGURE_CSV: &str = "figure1.csv";
pub const FIGURE_SVG: &str = "figure1.svg";

fn check_grid(section: &str, key: &str, grid: &[f64], lower: f64) -> Result<()> {
    let bad = |reason: &str| Error::Config {
        message: format!("[{section}].{key}: {reason}"),
    };
    if grid.is_empty() {
        return Err(bad("must not be empty"));
    }
    if grid.iter().any(|&v| !(v > lower && v.is_finite())) {
        return Err(bad(&format!("every entry must be finite and greater than {lower}")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("must be strictly increasing"));
    }
    Ok(())
}

fn information_plot(rows: &[Figure1Row]) -> String {
    let Some(first) = rows.first() else {
        return line_chart("Asymptotic information", "Δ", "information", &[]);
    };
    let mut series = Vec::new();
    for (j, v) in first.report.variants.iter().enumerate() {
        let (color, marker, label) = match v.spec.kind {
            EstimatorKind::Explicit => ("black", Marker::Circle, "explicit estimator (simulated)"),
            EstimatorKind::OptimalWeight => ("#1f5fbf", Marker::Triangle, "optimal estimator (simulated)"),
            EstimatorKind::TwoEigen => ("#2e8b57", Marker::Circle, "two eigenfunctions (simulated)"),
        };
        series.push(Series {
            label: label.into(),
            points: rows
                .iter()
                .map(|r| (r.report.delta, r.report.variants[j].empirical_information))
                .collect(),
            color,
            dashed: false,
            marker,
        });
    }
    series.push(Series {
        label: "1/σ²(θ₀)".into(),
        points: rows.iter().map(|r| (r.report.delta, r.inv_sigma2)).collect(),
        color: "#c0392b",
        dashed: false,
        marker: Marker::None,
    });
    series.push(Series {
        label: "bound 1/(θ₀+1)".into(),
        points: rows.iter().map(|r| (r.report.delta, r.inv_lower_bound)).collect(),
        color: "gray",
        dashed: true,
        marker: Marker::None,
    });
    let title = format!(
        "Asymptotic information: α = {}, x₀ = {}, θ = {}, n = {}",
        fmt_shortest(first.report.alpha),
        fmt_shortest(first.report.x0),
        fmt_shortest(first.report.theta0),
        first.report.n
    );
    line_chart(&title, "Δ", "information 1/Var(√n(θ̂ − θ₀))", &series)
}

pub fn cmd_experiment(ctx: &Context) -> Result<i32> {
    let sec = &ctx.config.experiment;
    let inv = |e| invalid("experiment", e);
    check_grid("experiment", "deltas", &sec.deltas, 0.0)?;
    let p = ModelParams::new(sec.theta, sec.alpha).map_err(inv)?;
    let scheme = SamplingScheme::new(sec.deltas[0], sec.n).map_err(inv)?;
    let mut base = ExperimentConfig::new(
        p,
        scheme,
        sec.x0,
        sec.replications,
        specs(&sec.variants, sec.beta1, sec.beta2),
        ctx.seed,
    )
    .map_err(inv)?;
    base.bracket = sec.bracket()?;
    base.record_timing = sec.record_timing;
    let rows = figure1_experiment(&base, &sec.deltas)?;
    let mut w = ctx.create(FIGURE_CSV)?;
    write_report_csv(rows.iter().map(|r| &r.report), &mut w)?;
    w.flush()?;
    let mut w = ctx.create(FIGURE_SVG)?;
    w.write_all(information_plot(&rows).as_bytes())?;
    w.flush()?;
    ctx.manifest("experiment", &[FIGURE_CSV, FIGURE_SVG], sec)?;
    for r in &rows {
        for v in &r.report.variants {
            if v.out_of_range_flag {
                eprintln!(
                    "warning: Δ = {}: {} failed in {} of {} replications",
                    fmt_shortest(r.report.delta),
                    v.spec.kind,
                    v.count_out_of_range,
                    v.replications
                );
            }
        }
    }
    println!("wrote {}", ctx.out.join(FIGURE_CSV).display());
    println!("wrote {}", ctx.out.join(FIGURE_SVG).display());
    Ok(0)
}

pub const VARIANCE_TABLE_FILE: &str = "variance_table.csv";
pub const VARIANCE_TABLE_HEADER: [&str; 8] = [
    "theta",
    "delta",
    "alpha_delta",
    "sigma2",
    "two_eigen_var",
    "two_eigen_limit",
    "optimal_limit",
    "improvement",
];

/// One analytic row: σ², the two-eigenfunction variance for the configured
/// weights and its large-αΔ limit, the optimal limit and its relative
/// improvement over θ + 1.
pub fn variance_table_row(theta: f64, alpha: f64, delta: f64, spec: &EstimatingFunctionSpec) -> Result<[f64; 8]> {
    Ok([
        theta,
        delta,
        alpha * delta,
        asym_var_one(theta, alpha, delta)?,
        asym_var_two(spec, theta, alpha, delta)?,
        two_eigen_limit(spec.beta1, spec.beta2, theta)?,
        asym_var_two_optimal_limit(theta)?,
        optimal_limit_improvement(theta)?,
    ])
}

pub fn cmd_variance_table(ctx: &Context) -> Result<i32> {
    let sec = &ctx.config.variance_table;
    let inv = |e| invalid("variance_table", e);
    check_grid("variance_table", "thetas", &sec.thetas, -0.5)?;
    check_grid("variance_table", "deltas", &sec.deltas, 0.0)?;
    let spec = EstimatingFunctionSpec::two_eigen(sec.beta1, sec.beta2);
    let mut w = csv::Writer::from_writer(ctx.create(VARIANCE_TABLE_FILE)?);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(VARIANCE_TABLE_HEADER).map_err(io)?;
    for &theta in &sec.thetas {
        for &delta in &sec.deltas {
            let row = variance_table_row(theta, sec.alpha, delta, &spec).map_err(inv)?;
            w.write_record(row.map(fmt_shortest)).map_err(io)?;
        }
    }
    w.flush()?;
    drop(w);
    ctx.manifest("variance-table", &[VARIANCE_TABLE_FILE], sec)?;
    println!("wrote {}", ctx.out.join(VARIANCE_TABLE_FILE).display());
    Ok(0)
}

pub const DUNKL_SERIES_FILE: &str = "dunkl_series.csv";
pub const DUNKL_PATH_FILE: &str = "dunkl_bessel_path.csv";
pub const DUNKL_ESTIMATES_FILE: &str = "dunkl_estimates.csv";

pub fn cmd_dunkl_demo(ctx: &Context) -> Result<i32> {
    let sec = &ctx.config.dunkl_demo;
    let inv = |e| invalid("dunkl_demo", e);
    let d = DunklParams::new(sec.k).map_err(inv)?;
    let scheme = SamplingScheme::new(sec.delta, sec.n).map_err(inv)?;
    let mut rng = RandomSource::new(ctx.seed);
    let sim = simulate_dunkl_series(&d, sec.alpha, &scheme, sec.x0, sec.substeps, &mut rng).map_err(|e| match e {
        Error::InvalidArgument { .. } | Error::OverflowHorizon { .. } | Error::NonPositiveAlpha { .. } => inv(e),
        other => other,
    })?;
    write_series(ctx, DUNKL_SERIES_FILE, &sim.series)?;
    let mut w = ctx.create(DUNKL_PATH_FILE)?;
    sim.bessel_path.write_csv(&mut w)?;
    w.flush()?;
    let all = [EstimatorKind::Explicit, EstimatorKind::OptimalWeight, EstimatorKind::TwoEigen];
    let specs = specs(
        &all,
        EstimatingFunctionSpec::DEFAULT_BETA1,
        EstimatingFunctionSpec::DEFAULT_BETA2,
    );
    let (rows, code) = estimate_rows(&sim.series, sec.alpha, &specs, &Default::default());
    write_estimates(ctx, DUNKL_ESTIMATES_FILE, &rows, true)?;
    ctx.manifest(
        "dunkl-demo",
        &[DUNKL_SERIES_FILE, DUNKL_PATH_FILE, DUNKL_ESTIMATES_FILE],
        sec,
    )?;
    let flips = sim
        .bessel_path
        .values()
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0)
        .count();
    println!("k = {}, sign changes on the fine grid: {flips}", fmt_shortest(sec.k));
    for r in &rows {
        println!("{:<10} k_hat = {}", r.variant.as_str(), fmt_shortest(r.theta_hat + 0.5));
    }
    Ok(code)
}
