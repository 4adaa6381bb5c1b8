//! Validated parameter and observation containers shared by every module.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower (open) boundary of the parameter space.
pub const THETA_MIN: f64 = -0.5;
/// Upper cap keeping `Γ(θ + 1)` and friends finite.
pub const THETA_MAX: f64 = 1e6;

/// Index parameter θ and mean-reversion speed α of the modified Bessel
/// diffusion `dX = dB + ((θ + 1/2)/X − αX) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    theta: f64,
    alpha: f64,
}

impl ModelParams {
    pub fn new(theta: f64, alpha: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha { alpha });
        }
        Ok(Self { theta, alpha })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The same speed with another index; used when an estimating function is
    /// evaluated away from the true parameter.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(theta, self.alpha)
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > THETA_MIN && theta <= THETA_MAX {
        Ok(())
    } else {
        Err(Error::ThetaOutOfRange { theta })
    }
}

/// Equidistant observation spacing Δ and number of observations n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingScheme {
    delta: f64,
    n: usize,
}

impl SamplingScheme {
    pub fn new(delta: f64, n: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::NonPositiveDelta { delta });
        }
        if n == 0 {
            return Err(Error::EmptyScheme);
        }
        Ok(Self { delta, n })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Observation time `i·Δ`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }
}

/// Checks a raw parameter set, reporting the first violated field.
pub fn validate_params(
    theta: f64,
    alpha: f64,
    delta: f64,
    n: usize,
) -> Result<(ModelParams, SamplingScheme)> {
    Ok((ModelParams::new(theta, alpha)?, SamplingScheme::new(delta, n)?))
}

/// Which values an observation series may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    /// `(0, ∞)`, the Bessel-type processes.
    Positive,
    /// `ℝ \ {0}`, signed Dunkl paths.
    Signed,
}

impl StateSpace {
    pub fn admits(self, v: f64) -> bool {
        match self {
            StateSpace::Positive => v > 0.0 && v.is_finite(),
            StateSpace::Signed => v != 0.0 && v.is_finite(),
        }
    }
}

/// Observations `X_Δ, …, X_{nΔ}` together with the starting value `x0`.
///
/// Every estimating function uses `x0` as the zeroth observation, so `x0`
/// is part of the series rather than metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    x0: f64,
    values: Vec<f64>,
    scheme: SamplingScheme,
    state: StateSpace,
}

impl ObservationSeries {
    pub fn new(x0: f64, values: Vec<f64>, scheme: SamplingScheme) -> Result<Self> {
        Self::with_state(x0, values, scheme, StateSpace::Positive)
    }

    pub fn signed(x0: f64, values: Vec<f64>, scheme: SamplingScheme) -> Result<Self> {
        Self::with_state(x0, values, scheme, StateSpace::Signed)
    }

    pub fn with_state(
        x0: f64,
        values: Vec<f64>,
        scheme: SamplingScheme,
        state: StateSpace,
    ) -> Result<Self> {
        if values.len() != scheme.n() {
            return Err(Error::LengthMismatch {
                expected: scheme.n(),
                actual: values.len(),
            });
        }
        if !state.admits(x0) {
            return Err(Error::InvalidObservation { index: 0, value: x0 });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| !state.admits(v)) {
            return Err(Error::InvalidObservation { index: i + 1, value: v });
        }
        Ok(Self {
            x0,
            values,
            scheme,
            state,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scheme(&self) -> SamplingScheme {
        self.scheme
    }

    pub fn state(&self) -> StateSpace {
        self.state
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Consecutive pairs `(X_{(i-1)Δ}, X_{iΔ})` for `i = 1..n`.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        std::iter::once(self.x0)
            .chain(self.values.iter().copied())
            .zip(self.values.iter().copied())
    }

    /// The modulus series, for estimating θ from a signed Dunkl path.
    pub fn modulus(&self) -> ObservationSeries {
        ObservationSeries {
            x0: self.x0.abs(),
            values: self.values.iter().map(|v| v.abs()).collect(),
            scheme: self.scheme,
            state: StateSpace::Positive,
        }
    }

    /// Writes `index,time,value` with `time = i·Δ`; row 0 carries `x0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["index", "time", "value"]).map_err(io)?;
        let all = std::iter::once(self.x0).chain(self.values.iter().copied());
        for (i, v) in all.enumerate() {
            w.write_record([
                i.to_string(),
                fmt_sig17(self.scheme.time(i)),
                fmt_sig17(v),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`ObservationSeries::write_csv`]. Δ is read
    /// from the time column of row 1.
    pub fn read_csv<R: Read>(input: R, state: StateSpace) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r
            .headers()
            .map_err(|e| Error::Schema { row: 0, message: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["index", "time", "value"] {
            return Err(Error::Schema {
                row: 0,
                message: format!("expected header index,time,value, found {:?}", headers),
            });
        }
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Schema { row: line, message: e.to_string() })?;
            let field = |k: usize, name: &str| -> Result<&str> {
                rec.get(k).ok_or_else(|| Error::Schema {
                    row: line,
                    message: format!("missing {name}"),
                })
            };
            let index: usize = field(0, "index")?.trim().parse().map_err(|_| Error::Schema {
                row: line,
                message: "index is not a non-negative integer".into(),
            })?;
            if index != line {
                return Err(Error::Schema {
                    row: line,
                    message: format!("index {index} out of order"),
                });
            }
            let parse = |s: &str, name: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Schema {
                    row: line,
                    message: format!("{name} '{s}' is not a number"),
                })
            };
            let t = parse(field(1, "time")?, "time")?;
            let v = parse(field(2, "value")?, "value")?;
            if !state.admits(v) {
                return Err(Error::Schema {
                    row: line,
                    message: format!("value {v} is outside the state space"),
                });
            }
            rows.push((t, v));
        }
        if rows.len() < 2 {
            return Err(Error::Schema {
                row: rows.len(),
                message: "need x0 (row 0) and at least one observation".into(),
            });
        }
        if rows[0].0 != 0.0 {
            return Err(Error::Schema { row: 0, message: "row 0 must have time 0".into() });
        }
        let delta = rows[1].0;
        let scheme = SamplingScheme::new(delta, rows.len() - 1)
            .map_err(|e| Error::Schema { row: 1, message: e.to_string() })?;
        for (i, &(t, _)) in rows.iter().enumerate().skip(2) {
            let expected = scheme.time(i);
            if (t - expected).abs() > 1e-9 * expected {
                return Err(Error::Schema {
                    row: i,
                    message: format!("time {t} is not {i}·Δ = {expected}"),
                });
            }
        }
        let x0 = rows[0].1;
        let values = rows[1..].iter().map(|&(_, v)| v).collect();
        Self::with_state(x0, values, scheme, state)
    }
}

/// The three estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Root of the first-eigenfunction estimating function, in closed form.
    Explicit,
    /// Godambe–Heyde optimally weighted linear estimating function for `X²`.
    #[serde(rename = "optimal")]
    OptimalWeight,
    /// Weighted combination of the first two eigenfunctions.
    TwoEigen,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Explicit => "explicit",
            EstimatorKind::OptimalWeight => "optimal",
            EstimatorKind::TwoEigen => "two_eigen",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "explicit" => Ok(EstimatorKind::Explicit),
            "optimal" => Ok(EstimatorKind::OptimalWeight),
            "two_eigen" => Ok(EstimatorKind::TwoEigen),
            other => Err(format!(
                "unknown estimator '{other}' (expected explicit, optimal or two_eigen)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationResult {
    pub theta_hat: f64,
    pub variant: EstimatorKind,
    pub asymptotic_variance: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimationResult {
    pub const CSV_HEADER: [&'static str; 5] =
        ["variant", "theta_hat", "asym_var", "converged", "iterations"];

    pub fn csv_record(&self) -> [String; 5] {
        [
            self.variant.to_string(),
            fmt_shortest(self.theta_hat),
            fmt_shortest(self.asymptotic_variance),
            self.converged.to_string(),
            self.iterations.to_string(),
        ]
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_shortest(x: f64) -> String {
    format!("{x:?}")
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}
