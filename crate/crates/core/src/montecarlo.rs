//! Replication harness: simulate exact paths, apply every estimator,
//! aggregate into variance and normality summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::quadrature_expectation;
use crate::error::{Error, Result};
use crate::estimate::{
    asym_var_one, asym_var_two, estimate, CompensatedSum, EstimatingFunctionSpec, RootBracket,
};
use crate::model::{fmt_shortest, EstimatorKind, ModelParams, SamplingScheme};
use crate::process::sample_modified_path;
use crate::special::RandomSource;

/// Share of failed replications above which a variant is flagged.
pub const OUT_OF_RANGE_FLAG_FRACTION: f64 = 0.01;
/// Minimum sample size for the normality diagnostic.
pub const NORMALITY_MIN_ESTIMATES: usize = 100;
/// Default Δ grid of the information-versus-Δ experiment.
pub const DEFAULT_DELTA_GRID: [f64; 9] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0];

pub const REPORT_CSV_HEADER: [&str; 15] = [
    "delta",
    "variant",
    "reps",
    "converged",
    "out_of_range",
    "mean_theta",
    "emp_var_scaled",
    "emp_info",
    "pred_var",
    "inv_lower_bound",
    "z_mean",
    "z_var",
    "z_skew",
    "z_kurt",
    "seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub scheme: SamplingScheme,
    pub x0: f64,
    pub replications: usize,
    pub variants: Vec<EstimatingFunctionSpec>,
    pub seed: u64,
    pub bracket: RootBracket,
    /// Wall-clock timing makes reports non-reproducible, so it is opt-in.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(
        params: ModelParams,
        scheme: SamplingScheme,
        x0: f64,
        replications: usize,
        variants: Vec<EstimatingFunctionSpec>,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            params,
            scheme,
            x0,
            replications,
            variants,
            seed,
            bracket: RootBracket::default(),
            record_timing: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidArgument {
                name: "replications",
                value: self.replications as f64,
                reason: "at least two replications are needed",
            });
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidObservation {
                index: 0,
                value: self.x0,
            });
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument {
                name: "variants",
                value: 0.0,
                reason: "at least one estimator is needed",
            });
        }
        self.bracket.validate()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Ok(Self {
            scheme: SamplingScheme::new(delta, self.scheme.n())?,
            ..self.clone()
        })
    }
}

/// Empirical variance of `√n(θ̂ − θ₀)`: the unbiased sample variance term
/// (headline), the squared-bias term, and a standard error of the former.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledVariance {
    pub variance: f64,
    pub bias_sq: f64,
    pub se: f64,
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let mut m = [CompensatedSum::default(); 3];
    for &x in xs {
        let d = x - mean;
        m[0].add(d * d);
        m[1].add(d * d * d);
        m[2].add(d * d * d * d);
    }
    (mean, m[0].value() / n, m[1].value() / n, m[2].value() / n)
}

pub fn empirical_scaled_variance(estimates: &[f64], theta0: f64, n: usize) -> Result<ScaledVariance> {
    if estimates.len() < 2 {
        return Err(Error::TooFewEstimates {
            required: 2,
            actual: estimates.len(),
        });
    }
    let r = estimates.len() as f64;
    let nf = n as f64;
    let (mean, m2, _, m4) = central_moments(estimates);
    Ok(ScaledVariance {
        variance: nf * m2 * r / (r - 1.0),
        bias_sq: nf * (mean - theta0).powi(2),
        se: nf * ((m4 - m2 * m2).max(0.0) / r).sqrt(),
    })
}

/// Moments of `z = √n(θ̂ − θ₀)/σ` with 4-sigma pass flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityDiagnostics {
    pub z_mean: f64,
    pub z_var: f64,
    pub z_skew: f64,
    pub z_kurt: f64,
    pub mean_ok: bool,
    pub var_ok: bool,
    pub skew_ok: bool,
    pub kurt_ok: bool,
}

impl NormalityDiagnostics {
    pub fn all_pass(&self) -> bool {
        self.mean_ok && self.var_ok && self.skew_ok && self.kurt_ok
    }
}

pub fn normality_diagnostic(
    estimates: &[f64],
    theta0: f64,
    n: usize,
    predicted_variance: f64,
) -> Result<NormalityDiagnostics> {
    if estimates.len() < NORMALITY_MIN_ESTIMATES {
        return Err(Error::TooFewEstimates {
            required: NORMALITY_MIN_ESTIMATES,
            actual: estimates.len(),
        });
    }
    if !(predicted_variance > 0.0 && predicted_variance.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "predicted_variance",
            value: predicted_variance,
            reason: "must be positive and finite",
        });
    }
    let scale = (n as f64 / predicted_variance).sqrt();
    let z: Vec<f64> = estimates.iter().map(|t| scale * (t - theta0)).collect();
    let r = z.len() as f64;
    let (mean, m2, m3, m4) = central_moments(&z);
    let z_var = m2 * r / (r - 1.0);
    let z_skew = m3 / m2.powf(1.5);
    let z_kurt = m4 / (m2 * m2) - 3.0;
    Ok(NormalityDiagnostics {
        z_mean: mean,
        z_var,
        z_skew,
        z_kurt,
        mean_ok: mean.abs() < 4.0 / r.sqrt(),
        var_ok: (z_var - 1.0).abs() < 4.0 * (2.0 / r).sqrt(),
        skew_ok: z_skew.abs() < 4.0 * (6.0 / r).sqrt(),
        kurt_ok: z_kurt.abs() < 4.0 * (24.0 / r).sqrt(),
    })
}

/// Godambe variance of the optimally weighted estimator,
/// `1/E_μ[1/(θ + 1 + 2αe X²/(1 − e))]`, by quadrature.
pub fn optimal_weight_variance(p: &ModelParams, delta: f64) -> Result<f64> {
    let a = 2.0 * p.alpha() * (-2.0 * p.alpha() * delta).exp() / -(-2.0 * p.alpha() * delta).exp_m1();
    let t1 = p.theta() + 1.0;
    let info = quadrature_expectation(|x| 1.0 / (t1 + a * x * x), p)?;
    Ok(1.0 / info)
}

/// Asymptotic variance of `√n(θ̂ − θ₀)` for a variant at the truth.
pub fn predicted_variance(spec: &EstimatingFunctionSpec, p: &ModelParams, delta: f64) -> Result<f64> {
    match spec.kind {
        EstimatorKind::Explicit => asym_var_one(p.theta(), p.alpha(), delta),
        EstimatorKind::OptimalWeight => optimal_weight_variance(p, delta),
        EstimatorKind::TwoEigen => asym_var_two(spec, p.theta(), p.alpha(), delta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub spec: EstimatingFunctionSpec,
    pub replications: usize,
    pub count_converged: usize,
    pub count_out_of_range: usize,
    /// Failed replications by error tag.
    pub failures: BTreeMap<String, usize>,
    pub out_of_range_flag: bool,
    pub mean_theta: f64,
    pub scaled_variance: Option<ScaledVariance>,
    pub empirical_information: f64,
    pub predicted_variance: f64,
    pub normality: Option<NormalityDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub theta0: f64,
    pub alpha: f64,
    pub delta: f64,
    pub n: usize,
    pub x0: f64,
    pub seed: u64,
    pub variants: Vec<VariantSummary>,
    pub wall_time: Option<f64>,
}

impl MonteCarloReport {
    pub fn variant(&self, kind: EstimatorKind) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.spec.kind == kind)
    }
}

type Outcome = std::result::Result<f64, &'static str>;

fn replicate(cfg: &ExperimentConfig, r: usize) -> Vec<Outcome> {
    let mut rng = RandomSource::new(cfg.seed).split(r as u64);
    let series = match sample_modified_path(&cfg.params, &cfg.scheme, cfg.x0, &mut rng) {
        Ok(s) => s,
        Err(e) => return vec![Err(e.tag()); cfg.variants.len()],
    };
    cfg.variants
        .iter()
        .map(|spec| match estimate(&series, cfg.params.alpha(), spec, &cfg.bracket) {
            Ok(res) if res.converged => Ok(res.theta_hat),
            Ok(_) => Err(Error::EstimateOutOfRange { theta_hat: f64::NAN }.tag()),
            Err(e) => Err(e.tag()),
        })
        .collect()
}

fn summarize(
    cfg: &ExperimentConfig,
    spec: &EstimatingFunctionSpec,
    outcomes: impl Iterator<Item = Outcome>,
) -> VariantSummary {
    let mut estimates = Vec::with_capacity(cfg.replications);
    let mut failures = BTreeMap::new();
    for o in outcomes {
        match o {
            Ok(t) => estimates.push(t),
            Err(tag) => *failures.entry(tag.to_string()).or_insert(0) += 1,
        }
    }
    let theta0 = cfg.params.theta();
    let n = cfg.scheme.n();
    let count_out_of_range = cfg.replications - estimates.len();
    let predicted = predicted_variance(spec, &cfg.params, cfg.scheme.delta()).unwrap_or(f64::NAN);
    let scaled = empirical_scaled_variance(&estimates, theta0, n).ok();
    let mean_theta = if estimates.is_empty() {
        f64::NAN
    } else {
        estimates.iter().copied().collect::<CompensatedSum>().value() / estimates.len() as f64
    };
    VariantSummary {
        spec: *spec,
        replications: cfg.replications,
        count_converged: estimates.len(),
        count_out_of_range,
        failures,
        out_of_range_flag: count_out_of_range as f64 > OUT_OF_RANGE_FLAG_FRACTION * cfg.replications as f64,
        mean_theta,
        scaled_variance: scaled,
        empirical_information: scaled.map_or(f64::NAN, |s| 1.0 / s.variance),
        predicted_variance: predicted,
        normality: normality_diagnostic(&estimates, theta0, n, predicted).ok(),
    }
}

/// Runs the experiment on the current rayon pool.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<Vec<Outcome>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect();
    let variants = cfg
        .variants
        .iter()
        .enumerate()
        .map(|(j, spec)| summarize(cfg, spec, outcomes.iter().map(|o| o[j])))
        .collect();
    Ok(MonteCarloReport {
        theta0: cfg.params.theta(),
        alpha: cfg.params.alpha(),
        delta: cfg.scheme.delta(),
        n: cfg.scheme.n(),
        x0: cfg.x0,
        seed: cfg.seed,
        variants,
        wall_time: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// Builds a dedicated pool for a run; `threads = 0` lets rayon decide.
pub fn with_thread_cap<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(pool.install(job))
}

pub fn run_replications_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<MonteCarloReport> {
    with_thread_cap(threads, || run_replications(cfg))?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Row {
    pub report: MonteCarloReport,
    /// `1/σ²(θ₀)` at this Δ.
    pub inv_sigma2: f64,
    /// `1/(θ₀ + 1)`.
    pub inv_lower_bound: f64,
}

/// Information versus Δ: one report per grid point with the analytic curve
/// and the lower-bound line alongside.
pub fn figure1_experiment(base: &ExperimentConfig, delta_grid: &[f64]) -> Result<Vec<Figure1Row>> {
    if delta_grid.is_empty() {
        return Err(Error::EmptyScheme);
    }
    if let Some(i) = (1..delta_grid.len()).find(|&i| !(delta_grid[i] > delta_grid[i - 1])) {
        return Err(Error::InvalidTimes { index: i });
    }
    let theta0 = base.params.theta();
    delta_grid
        .iter()
        .map(|&delta| {
            let cfg = base.with_delta(delta)?;
            Ok(Figure1Row {
                report: run_replications(&cfg)?,
                inv_sigma2: 1.0 / asym_var_one(theta0, base.params.alpha(), delta)?,
                inv_lower_bound: 1.0 / (theta0 + 1.0),
            })
        })
        .collect()
}

fn report_records(report: &MonteCarloReport) -> Vec<[String; 15]> {
    let f = fmt_shortest;
    report
        .variants
        .iter()
        .map(|v| {
            let nd = v.normality;
            let z = |g: fn(&NormalityDiagnostics) -> f64| nd.as_ref().map_or(f64::NAN, g);
            [
                f(report.delta),
                v.spec.kind.to_string(),
                v.replications.to_string(),
                v.count_converged.to_string(),
                v.count_out_of_range.to_string(),
                f(v.mean_theta),
                f(v.scaled_variance.map_or(f64::NAN, |s| s.variance)),
                f(v.empirical_information),
                f(v.predicted_variance),
                f(1.0 / (report.theta0 + 1.0)),
                f(z(|d| d.z_mean)),
                f(z(|d| d.z_var)),
                f(z(|d| d.z_skew)),
                f(z(|d| d.z_kurt)),
                f(report.wall_time.unwrap_or(f64::NAN)),
            ]
        })
        .collect()
}

/// One row per (Δ, variant).
pub fn write_report_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a MonteCarloReport>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(REPORT_CSV_HEADER).map_err(io)?;
    for report in reports {
        for rec in report_records(report) {
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
