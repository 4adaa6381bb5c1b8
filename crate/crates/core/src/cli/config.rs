//! TOML configuration: an optional top-level `seed` and one table per
//! subcommand. Missing tables and keys fall back to the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimatingFunctionSpec, RootBracket};
use crate::model::EstimatorKind;
use crate::montecarlo::DEFAULT_DELTA_GRID;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub experiment: ExperimentSection,
    pub variance_table: VarianceTableSection,
    pub dunkl_demo: DunklDemoSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Modified,
    Bessel,
    Dunkl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub kind: PathKind,
    pub theta: f64,
    pub alpha: f64,
    pub delta: f64,
    pub n: usize,
    pub x0: f64,
    /// Bessel paths: map to the stationary time scale (same CSV schema as
    /// modified paths) instead of writing the raw clock.
    pub transform: bool,
    /// Dunkl multiplicity; replaces `theta` for `kind = "dunkl"`.
    pub k: f64,
    /// Fine steps per observation gap for the Dunkl sign overlay.
    pub substeps: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            kind: PathKind::Modified,
            theta: 3.0,
            alpha: 1.0,
            delta: 1.0,
            n: 1000,
            x0: 0.1,
            transform: true,
            k: 1.5,
            substeps: 8,
        }
    }
}

fn section_bracket(section: &str, lo: f64, hi: f64, tol: f64) -> Result<RootBracket> {
    RootBracket::new(lo, hi, tol).map_err(|e| invalid(section, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    /// CSV written by `simulate`; relative paths resolve against the config
    /// file's directory.
    pub input: PathBuf,
    pub alpha: f64,
    pub variants: Vec<EstimatorKind>,
    pub beta1: f64,
    pub beta2: f64,
    /// Input is a signed Dunkl series; adds `k_hat = theta_hat + 1/2`.
    pub dunkl: bool,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub tol: f64,
}

impl EstimateSection {
    pub fn bracket(&self) -> Result<RootBracket> {
        section_bracket("estimate", self.bracket_lo, self.bracket_hi, self.tol)
    }
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            input: PathBuf::from("series.csv"),
            alpha: 1.0,
            variants: vec![
                EstimatorKind::Explicit,
                EstimatorKind::OptimalWeight,
                EstimatorKind::TwoEigen,
            ],
            beta1: EstimatingFunctionSpec::DEFAULT_BETA1,
            beta2: EstimatingFunctionSpec::DEFAULT_BETA2,
            dunkl: false,
            bracket_lo: RootBracket::default().lo,
            bracket_hi: RootBracket::default().hi,
            tol: RootBracket::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub theta: f64,
    pub alpha: f64,
    pub x0: f64,
    pub n: usize,
    pub replications: usize,
    pub deltas: Vec<f64>,
    pub variants: Vec<EstimatorKind>,
    pub beta1: f64,
    pub beta2: f64,
    /// Fills the `seconds` column; timing makes the CSV non-reproducible.
    pub record_timing: bool,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub tol: f64,
}

impl ExperimentSection {
    pub fn bracket(&self) -> Result<RootBracket> {
        section_bracket("experiment", self.bracket_lo, self.bracket_hi, self.tol)
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            theta: 3.0,
            alpha: 1.0,
            x0: 0.1,
            n: 1000,
            replications: 10_000,
            deltas: DEFAULT_DELTA_GRID.to_vec(),
            variants: vec![EstimatorKind::Explicit, EstimatorKind::OptimalWeight],
            beta1: EstimatingFunctionSpec::DEFAULT_BETA1,
            beta2: EstimatingFunctionSpec::DEFAULT_BETA2,
            record_timing: false,
            bracket_lo: RootBracket::default().lo,
            bracket_hi: RootBracket::default().hi,
            tol: RootBracket::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceTableSection {
    pub thetas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for VarianceTableSection {
    fn default() -> Self {
        Self {
            thetas: vec![-0.499, -0.25, 0.0, 0.5, 1.0, 2.0, 3.0, 5.0],
            deltas: vec![0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0],
            alpha: 1.0,
            beta1: EstimatingFunctionSpec::DEFAULT_BETA1,
            beta2: EstimatingFunctionSpec::DEFAULT_BETA2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DunklDemoSection {
    pub k: f64,
    pub alpha: f64,
    pub delta: f64,
    pub n: usize,
    pub x0: f64,
    pub substeps: usize,
}

impl Default for DunklDemoSection {
    fn default() -> Self {
        Self {
            k: 1.5,
            alpha: 1.0,
            delta: 0.25,
            n: 1000,
            x0: 1.0,
            substeps: 8,
        }
    }
}

pub fn specs(variants: &[EstimatorKind], beta1: f64, beta2: f64) -> Vec<EstimatingFunctionSpec> {
    variants
        .iter()
        .map(|&kind| EstimatingFunctionSpec { kind, beta1, beta2 })
        .collect()
}

/// Re-labels a validation failure as a configuration error naming the table.
pub fn invalid(section: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Config {
            message: format!("[{section}]: {other}"),
        },
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { message } => Error::Config {
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    /// `--seed` wins over the file, which wins over [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed).unwrap_or(DEFAULT_SEED)
    }
}
