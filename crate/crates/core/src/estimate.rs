//! Martingale estimating functions for θ with α known, their root solvers,
//! asymptotic variances and the Dunkl multiplicity mapping.
//!
//! Throughout, `e = e^{−2αΔ}`, `Y = X²` and `u = αX²`; the start value `x0`
//! serves as the zeroth observation.

use serde::{Deserialize, Serialize};

use crate::eigen::Eigenfunction;
use crate::error::{Error, Result};
use crate::model::{
    check_theta, EstimationResult, EstimatorKind, ModelParams, ObservationSeries, THETA_MIN,
};
use crate::process::DUNKL_ACTIVITY_THRESHOLD;

/// Hard cap on root-solver iterations.
pub const MAX_ROOT_ITERATIONS: usize = 200;
/// Doublings of the upper bracket end tried before giving up.
pub const BRACKET_EXPANSIONS: usize = 3;
const SCAN_POINTS: usize = 600;
const DEGENERATE_RTOL: f64 = 1e-12;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Search interval `(lo, hi)` for θ and the stopping width `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for RootBracket {
    fn default() -> Self {
        Self {
            lo: -0.499,
            hi: 1000.0,
            tol: 1e-10,
        }
    }
}

impl RootBracket {
    pub fn new(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        let b = Self { lo, hi, tol };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo > THETA_MIN && self.lo < self.hi && self.hi.is_finite() && self.tol > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidBracket {
                lo: self.lo,
                hi: self.hi,
                tol: self.tol,
            })
        }
    }

    fn with_hi(&self, hi: f64) -> Self {
        Self { hi, ..*self }
    }
}

/// Which estimating function to solve, with the constant two-eigenfunction
/// weights `(β₁, β₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatingFunctionSpec {
    pub kind: EstimatorKind,
    pub beta1: f64,
    pub beta2: f64,
}

impl EstimatingFunctionSpec {
    pub const DEFAULT_BETA1: f64 = 2.0;
    pub const DEFAULT_BETA2: f64 = 1.0;

    pub fn explicit() -> Self {
        Self::of(EstimatorKind::Explicit)
    }

    pub fn optimal() -> Self {
        Self::of(EstimatorKind::OptimalWeight)
    }

    pub fn two_eigen(beta1: f64, beta2: f64) -> Self {
        Self {
            kind: EstimatorKind::TwoEigen,
            beta1,
            beta2,
        }
    }

    pub fn of(kind: EstimatorKind) -> Self {
        Self {
            kind,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
        }
    }
}

/// Brent's method: inverse quadratic / secant steps safeguarded by bisection.
/// Returns the root and the number of iterations spent.
pub fn root_solve<F: FnMut(f64) -> f64>(mut f: F, bracket: &RootBracket) -> Result<(f64, usize)> {
    bracket.validate()?;
    let no_sign = Error::NoSignChange {
        lo: bracket.lo,
        hi: bracket.hi,
    };
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    if !fa.is_finite() || !fb.is_finite() || (fa > 0.0) == (fb > 0.0) {
        return Err(no_sign);
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for iter in 1..=MAX_ROOT_ITERATIONS {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * bracket.tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok((b, iter));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NotConverged { iterations: iter });
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ROOT_ITERATIONS,
    })
}

fn decay(alpha: f64, delta: f64) -> f64 {
    (-2.0 * alpha * delta).exp()
}

/// `1 − e^{−2αΔ}` without cancellation.
fn gain(alpha: f64, delta: f64) -> f64 {
    -(-2.0 * alpha * delta).exp_m1()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveAlpha { alpha })
    }
}

/// `G_n(θ) = n(1 − e) + Σ (e·αX²_{i−1} − αX²_i)/(θ + 1)`.
pub fn gn_value(series: &ObservationSeries, theta: f64, alpha: f64) -> Result<f64> {
    check_theta(theta)?;
    check_alpha(alpha)?;
    let delta = series.scheme().delta();
    let e = decay(alpha, delta);
    let n = series.len() as f64;
    let s = csum(
        series
            .transitions()
            .map(|(x0, x1)| (e * alpha * x0 * x0 - alpha * x1 * x1) / (theta + 1.0)),
    );
    Ok(n * gain(alpha, delta) + s)
}

/// `G̃_n(θ) = Σ (Y_i − e·Y_{i−1} + ((θ + 1)/α)(e − 1))`.
pub fn cir_linear_gn(series: &ObservationSeries, theta: f64, alpha: f64) -> Result<f64> {
    check_theta(theta)?;
    check_alpha(alpha)?;
    let delta = series.scheme().delta();
    let e = decay(alpha, delta);
    let shift = (theta + 1.0) / alpha * gain(alpha, delta);
    Ok(csum(
        series.transitions().map(|(x0, x1)| x1 * x1 - e * x0 * x0 - shift),
    ))
}

/// The common root of `G_n` and `G̃_n`:
/// `α Σ (Y_i − e·Y_{i−1}) / (n(1 − e)) − 1`.
fn linear_root(series: &ObservationSeries, alpha: f64) -> f64 {
    let delta = series.scheme().delta();
    let e = decay(alpha, delta);
    let s = csum(series.transitions().map(|(x0, x1)| x1 * x1 - e * x0 * x0));
    alpha * s / (series.len() as f64 * gain(alpha, delta)) - 1.0
}

/// Root of [`cir_linear_gn`]; identical, bit for bit, to the explicit estimate.
pub fn cir_linear_root(series: &ObservationSeries, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(linear_root(series, alpha))
}

/// Closed-form estimator. An estimate at or below −1/2 is returned raw with
/// `converged = false` and an undefined (NaN) asymptotic variance.
pub fn estimate_theta_explicit(series: &ObservationSeries, alpha: f64) -> Result<EstimationResult> {
    check_alpha(alpha)?;
    let theta_hat = linear_root(series, alpha);
    let in_range = check_theta(theta_hat).is_ok();
    Ok(EstimationResult {
        theta_hat,
        variant: EstimatorKind::Explicit,
        asymptotic_variance: if in_range {
            asym_var_one(theta_hat, alpha, series.scheme().delta())?
        } else {
            f64::NAN
        },
        iterations: 0,
        converged: in_range,
    })
}

/// `g(x) = 1/(((θ + 1)/α)(1 − e) + 2x²e)`, the reciprocal conditional
/// variance of `X_Δ²` given `X_0 = x`.
pub fn optimal_weight(x_prev: f64, theta: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_alpha(alpha)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::NonPositiveDelta { delta });
    }
    Ok(1.0 / ((theta + 1.0) / alpha * gain(alpha, delta) + 2.0 * x_prev * x_prev * decay(alpha, delta)))
}

/// Optimally weighted estimating function, precomputed so each evaluation is
/// a single pass: `Σ (r_i − m(θ))/(m(θ) + s_i)` with `r_i = Y_i − eY_{i−1}`,
/// `s_i = 2eY_{i−1}` and `m(θ) = (θ + 1)(1 − e)/α`.
struct OptimalSums {
    r: Vec<f64>,
    s: Vec<f64>,
    scale: f64,
}

impl OptimalSums {
    fn new(series: &ObservationSeries, alpha: f64) -> Self {
        let delta = series.scheme().delta();
        let e = decay(alpha, delta);
        let (r, s) = series
            .transitions()
            .map(|(x0, x1)| (x1 * x1 - e * x0 * x0, 2.0 * e * x0 * x0))
            .unzip();
        Self {
            r,
            s,
            scale: gain(alpha, delta) / alpha,
        }
    }

    fn value(&self, theta: f64) -> f64 {
        let m = (theta + 1.0) * self.scale;
        csum(self.r.iter().zip(&self.s).map(|(r, s)| (r - m) / (m + s)))
    }

    /// Plug-in Godambe variance `1/mean(g(1 − e)/α)`.
    fn godambe_variance(&self, theta: f64) -> f64 {
        let m = (theta + 1.0) * self.scale;
        let info = csum(self.s.iter().map(|s| self.scale / (m + s))) / self.s.len() as f64;
        1.0 / info
    }
}

/// Value of the optimally weighted estimating function at θ.
pub fn optimal_gn(series: &ObservationSeries, theta: f64, alpha: f64) -> Result<f64> {
    check_theta(theta)?;
    check_alpha(alpha)?;
    Ok(OptimalSums::new(series, alpha).value(theta))
}

/// Runs `solve` on the bracket and, while the function is still positive at
/// the upper end, on brackets with `hi` doubled.
fn solve_expanding<F: FnMut(f64) -> f64>(
    mut f: F,
    bracket: &RootBracket,
) -> Result<(f64, usize)> {
    let mut current = *bracket;
    let mut spent = 0;
    for attempt in 0..=BRACKET_EXPANSIONS {
        match root_solve(&mut f, &current) {
            Err(Error::NoSignChange { .. })
                if attempt < BRACKET_EXPANSIONS && f(current.lo) > 0.0 =>
            {
                spent += 1;
                current = current.with_hi(2.0 * current.hi);
            }
            Ok((root, iters)) => return Ok((root, spent + iters)),
            Err(err) => return Err(err),
        }
    }
    Err(Error::NoSignChange {
        lo: current.lo,
        hi: current.hi,
    })
}

/// Root of the optimally weighted estimating function. The function is
/// strictly decreasing in θ, so the root is unique when it exists.
pub fn estimate_theta_optimal(
    series: &ObservationSeries,
    alpha: f64,
    bracket: &RootBracket,
) -> Result<EstimationResult> {
    check_alpha(alpha)?;
    bracket.validate()?;
    let sums = OptimalSums::new(series, alpha);
    let (theta_hat, iterations) = solve_expanding(|t| sums.value(t), bracket)?;
    Ok(EstimationResult {
        theta_hat,
        variant: EstimatorKind::OptimalWeight,
        asymptotic_variance: sums.godambe_variance(theta_hat),
        iterations,
        converged: true,
    })
}

/// `H_n(θ) = Σ_i Σ_j β_j (φ_j(X_i) − e^{−λ_j Δ} φ_j(X_{i−1}))`, `j = 1, 2`.
pub fn hn_value(
    series: &ObservationSeries,
    theta: f64,
    alpha: f64,
    spec: &EstimatingFunctionSpec,
) -> Result<f64> {
    let p = ModelParams::new(theta, alpha)?;
    let delta = series.scheme().delta();
    let phi1 = Eigenfunction::new(1, &p)?;
    let phi2 = Eigenfunction::new(2, &p)?;
    let d1 = (-phi1.eigenvalue() * delta).exp();
    let d2 = (-phi2.eigenvalue() * delta).exp();
    Ok(csum(series.transitions().map(|(x0, x1)| {
        spec.beta1 * (phi1.value(x1) - d1 * phi1.value(x0))
            + spec.beta2 * (phi2.value(x1) - d2 * phi2.value(x0))
    })))
}

/// `H_n` collapsed to three data sums so each θ costs O(1):
/// `β₁[n(1−e) − A/(θ+1)] + β₂[n(1−e²) − 2B/(θ+1) + C/((θ+1)(θ+2))]`.
struct TwoEigenSums {
    n: f64,
    gain1: f64,
    gain2: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl TwoEigenSums {
    fn new(series: &ObservationSeries, alpha: f64) -> Self {
        let delta = series.scheme().delta();
        let e = decay(alpha, delta);
        let e2 = e * e;
        let (mut a, mut b, mut c) = (
            CompensatedSum::default(),
            CompensatedSum::default(),
            CompensatedSum::default(),
        );
        for (x0, x1) in series.transitions() {
            let (u0, u1) = (alpha * x0 * x0, alpha * x1 * x1);
            a.add(u1 - e * u0);
            b.add(u1 - e2 * u0);
            c.add(u1 * u1 - e2 * u0 * u0);
        }
        Self {
            n: series.len() as f64,
            gain1: gain(alpha, delta),
            gain2: -(-4.0 * alpha * delta).exp_m1(),
            a: a.value(),
            b: b.value(),
            c: c.value(),
        }
    }

    fn value(&self, theta: f64, spec: &EstimatingFunctionSpec) -> f64 {
        let t1 = theta + 1.0;
        spec.beta1 * (self.n * self.gain1 - self.a / t1)
            + spec.beta2 * (self.n * self.gain2 - 2.0 * self.b / t1 + self.c / (t1 * (theta + 2.0)))
    }
}

/// Splits `(lo, hi)` geometrically in `θ + 1/2` and walks down from `hi`
/// to the first sign change, so the largest root is the one bracketed.
fn largest_sign_change<F: Fn(f64) -> f64>(f: &F, bracket: &RootBracket) -> Option<RootBracket> {
    let base = bracket.lo - THETA_MIN;
    let ratio = ((bracket.hi - THETA_MIN) / base).powf(1.0 / SCAN_POINTS as f64);
    let mut upper = bracket.hi;
    let f_hi = f(upper);
    if f_hi == 0.0 {
        return Some(*bracket);
    }
    for j in (0..SCAN_POINTS).rev() {
        let t = if j == 0 { bracket.lo } else { THETA_MIN + base * ratio.powi(j as i32) };
        let ft = f(t);
        if ft == 0.0 || (ft > 0.0) != (f_hi > 0.0) {
            return Some(RootBracket {
                lo: t,
                hi: upper,
                tol: bracket.tol,
            });
        }
        upper = t;
    }
    None
}

/// Ensures the two-eigenfunction sensitivity `f` is nonzero at `theta`.
fn check_sensitivity(spec: &EstimatingFunctionSpec, theta: f64, alpha: f64, delta: f64) -> Result<f64> {
    let (t1, t2) = sensitivity_terms(spec, theta, alpha, delta);
    let f = t1 + t2;
    if !(f.abs() > DEGENERATE_RTOL * (t1.abs() + t2.abs())) {
        return Err(Error::WeightDegenerate { theta });
    }
    Ok(f)
}

fn sensitivity_terms(spec: &EstimatingFunctionSpec, theta: f64, alpha: f64, delta: f64) -> (f64, f64) {
    let t1 = theta + 1.0;
    (
        spec.beta1 * gain(alpha, delta) / t1,
        spec.beta2 * -(-4.0 * alpha * delta).exp_m1() / (t1 * (theta + 2.0)),
    )
}

/// Root of `H_n`. `H_n (θ+1)(θ+2)` is quadratic in θ and can have two roots in
/// the parameter space; the largest one is returned.
pub fn estimate_theta_two_eigen(
    series: &ObservationSeries,
    alpha: f64,
    spec: &EstimatingFunctionSpec,
    bracket: &RootBracket,
) -> Result<EstimationResult> {
    check_alpha(alpha)?;
    bracket.validate()?;
    let delta = series.scheme().delta();
    check_sensitivity(spec, bracket.lo, alpha, delta)?;
    check_sensitivity(spec, bracket.hi, alpha, delta)?;
    let sums = TwoEigenSums::new(series, alpha);
    let h = |t: f64| sums.value(t, spec);

    let mut current = *bracket;
    let mut found = None;
    for attempt in 0..=BRACKET_EXPANSIONS {
        if let Some(sub) = largest_sign_change(&h, &current) {
            found = Some((sub, attempt));
            break;
        }
        if attempt == BRACKET_EXPANSIONS || !(h(current.hi) < 0.0) {
            break;
        }
        current = current.with_hi(2.0 * current.hi);
    }
    let Some((sub, spent)) = found else {
        return Err(Error::NoSignChange {
            lo: current.lo,
            hi: current.hi,
        });
    };
    let (theta_hat, iterations) = root_solve(h, &sub)?;
    Ok(EstimationResult {
        theta_hat,
        variant: EstimatorKind::TwoEigen,
        asymptotic_variance: asym_var_two(spec, theta_hat, alpha, delta)?,
        iterations: spent + iterations,
        converged: true,
    })
}

/// Dispatches on `spec.kind`.
pub fn estimate(
    series: &ObservationSeries,
    alpha: f64,
    spec: &EstimatingFunctionSpec,
    bracket: &RootBracket,
) -> Result<EstimationResult> {
    match spec.kind {
        EstimatorKind::Explicit => estimate_theta_explicit(series, alpha),
        EstimatorKind::OptimalWeight => estimate_theta_optimal(series, alpha, bracket),
        EstimatorKind::TwoEigen => estimate_theta_two_eigen(series, alpha, spec, bracket),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDelta { delta })
    }
}

/// `σ²(θ₀) = (θ₀ + 1)(1 + e)/(1 − e)`.
pub fn asym_var_one(theta0: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_theta(theta0)?;
    check_alpha(alpha)?;
    check_delta(delta)?;
    Ok((theta0 + 1.0) * (1.0 + decay(alpha, delta)) / gain(alpha, delta))
}

/// `v/f²` for the two-eigenfunction estimating function with constant weights.
pub fn asym_var_two(spec: &EstimatingFunctionSpec, theta0: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_theta(theta0)?;
    check_alpha(alpha)?;
    check_delta(delta)?;
    let f = check_sensitivity(spec, theta0, alpha, delta)?;
    let t1 = theta0 + 1.0;
    let v = spec.beta1 * spec.beta1 * -(-4.0 * alpha * delta).exp_m1() / t1
        + spec.beta2 * spec.beta2 * 2.0 * -(-8.0 * alpha * delta).exp_m1() / (t1 * (theta0 + 2.0));
    Ok(v / (f * f))
}

/// `lim_{αΔ→∞} v/f²` for arbitrary constant weights.
pub fn two_eigen_limit(beta1: f64, beta2: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let a = 1.0 / (theta + 1.0);
    let b = a / (theta + 2.0);
    let f = beta1 * a + beta2 * b;
    if !(f.abs() > DEGENERATE_RTOL * (beta1.abs() * a + beta2.abs() * b)) {
        return Err(Error::WeightDegenerate { theta });
    }
    Ok((beta1 * beta1 * a + 2.0 * beta2 * beta2 * b) / (f * f))
}

/// Minimum of [`two_eigen_limit`], attained at `β₁ = 2β₂`:
/// `2(θ + 1)(θ + 2)/(2θ + 5)`.
pub fn asym_var_two_optimal_limit(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(2.0 * (theta + 1.0) * (theta + 2.0) / (2.0 * theta + 5.0))
}

/// Relative improvement of the optimal limit over `θ + 1`: `1/(2θ + 5)`.
pub fn optimal_limit_improvement(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(1.0 / (2.0 * theta + 5.0))
}

/// Jump activity of the Dunkl process with multiplicity `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpActivity {
    Finite,
    Infinite,
}

/// `k = θ + 1/2`; θ = −1/2 maps to the boundary `k = 0`.
pub fn dunkl_k_from_theta(theta: f64) -> Result<(f64, JumpActivity)> {
    if !(theta >= THETA_MIN && theta.is_finite()) {
        return Err(Error::ThetaOutOfRange { theta });
    }
    let k = theta + 0.5;
    let activity = if k >= DUNKL_ACTIVITY_THRESHOLD {
        JumpActivity::Finite
    } else {
        JumpActivity::Infinite
    };
    Ok((k, activity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingScheme;
    use crate::process::sample_modified_path;
    use crate::special::{sample_gamma, RandomSource};
    use bessel_testkit::stats::mean_se;
    use proptest::prelude::*;

    fn series(x0: f64, values: &[f64], delta: f64) -> ObservationSeries {
        ObservationSeries::new(x0, values.to_vec(), SamplingScheme::new(delta, values.len()).unwrap())
            .unwrap()
    }

    fn half_decay_delta() -> f64 {
        std::f64::consts::LN_2 / 2.0
    }

    fn simulate(theta: f64, alpha: f64, delta: f64, n: usize, x0: f64, seed: u64) -> ObservationSeries {
        let p = ModelParams::new(theta, alpha).unwrap();
        let s = SamplingScheme::new(delta, n).unwrap();
        sample_modified_path(&p, &s, x0, &mut RandomSource::new(seed)).unwrap()
    }

    #[test]
    fn gn_hand_value() {
        let s = series(1.0, &[2.0], half_decay_delta());
        let g = gn_value(&s, 3.0, 1.0).unwrap();
        assert!((g + 0.375).abs() < 1e-15, "{g}");
    }

    #[test]
    fn gn_on_constant_series() {
        let (alpha, delta, n, c) = (0.7, 0.4, 7, 1.3);
        let s = series(c, &vec![c; n], delta);
        for theta in [0.0, 1.0, 2.5] {
            let g = gn_value(&s, theta, alpha).unwrap();
            let want = n as f64 * gain(alpha, delta) * (1.0 - alpha * c * c / (theta + 1.0));
            assert!((g - want).abs() < 1e-14 * n as f64);
        }
        let theta0 = alpha * c * c - 1.0;
        assert!(gn_value(&s, theta0, alpha).unwrap().abs() < 1e-14);
    }

    #[test]
    fn explicit_hand_value() {
        let s = series(1.0, &[2.0], half_decay_delta());
        let r = estimate_theta_explicit(&s, 1.0).unwrap();
        assert!((r.theta_hat - 6.0).abs() < 1e-13);
        assert!(r.converged);
        assert_eq!(r.variant, EstimatorKind::Explicit);
    }

    #[test]
    fn explicit_on_stationary_fixed_point() {
        let (theta0, alpha) = (3.0f64, 1.0f64);
        let c = ((theta0 + 1.0) / alpha).sqrt();
        let s = series(c, &[c; 20], 1.0);
        let r = estimate_theta_explicit(&s, alpha).unwrap();
        assert!((r.theta_hat - theta0).abs() < 1e-14);
    }

    #[test]
    fn explicit_root_zeroes_gn() {
        let s = simulate(1.0, 1.0, 0.5, 500, 1.0, 1);
        let r = estimate_theta_explicit(&s, 1.0).unwrap();
        assert!(gn_value(&s, r.theta_hat, 1.0).unwrap().abs() < 1e-12 * 500.0);
    }

    #[test]
    fn explicit_out_of_range_is_reported_raw() {
        let s = series(1e-3, &[1e-3; 10], 1.0);
        let r = estimate_theta_explicit(&s, 1.0).unwrap();
        assert!(r.theta_hat < -0.5);
        assert!(!r.converged);
        assert!(r.asymptotic_variance.is_nan());
    }

    #[test]
    fn explicit_on_long_simulation() {
        let s = simulate(3.0, 1.0, 1.0, 10_000, 0.1, 2);
        let r = estimate_theta_explicit(&s, 1.0).unwrap();
        let band = 4.0 * (asym_var_one(3.0, 1.0, 1.0).unwrap() / 1e4).sqrt();
        assert!((r.theta_hat - 3.0).abs() < band, "{}", r.theta_hat);
        assert!((r.asymptotic_variance - asym_var_one(r.theta_hat, 1.0, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn cir_linear_proportional_and_same_root() {
        let s = simulate(2.0, 0.8, 0.7, 300, 1.0, 3);
        let alpha = 0.8;
        for i in 0..50 {
            let theta = -0.45 + 0.2 * i as f64;
            let g = gn_value(&s, theta, alpha).unwrap();
            let gt = cir_linear_gn(&s, theta, alpha).unwrap();
            let scale = s.transitions().map(|(a, b)| a * a + b * b).sum::<f64>()
                + 300.0 * (theta + 1.0) / alpha;
            assert!((gt + (theta + 1.0) / alpha * g).abs() <= 1e-12 * scale);
        }
        let root = cir_linear_root(&s, alpha).unwrap();
        assert_eq!(root.to_bits(), estimate_theta_explicit(&s, alpha).unwrap().theta_hat.to_bits());
        assert!(cir_linear_gn(&s, root, alpha).unwrap().abs() < 1e-10);
    }

    #[test]
    fn cir_linear_on_constant_stationary_series() {
        let c = 2.0;
        let s = series(c, &[c; 5], 0.3);
        assert!(cir_linear_gn(&s, 3.0, 1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn optimal_weight_cases() {
        let g = optimal_weight(2.0, 3.0, 1.0, half_decay_delta()).unwrap();
        assert!((g - 1.0 / 6.0).abs() < 1e-15);
        let g = optimal_weight(5.0, 3.0, 2.0, 30.0).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        assert!(optimal_weight(1e200, 3.0, 1.0, 1.0).unwrap() < 1e-300);
        assert!(optimal_weight(1.0, 3.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn optimal_root_on_fixed_point_series() {
        let c = 2.0;
        let s = series(c, &[c; 30], 1.0);
        let r = estimate_theta_optimal(&s, 1.0, &RootBracket::default()).unwrap();
        assert!((r.theta_hat - 3.0).abs() < 1e-9);
    }

    #[test]
    fn optimal_on_long_simulation() {
        let s = simulate(3.0, 1.0, 1.0, 10_000, 0.1, 4);
        let r = estimate_theta_optimal(&s, 1.0, &RootBracket::default()).unwrap();
        let band = 4.0 * (4.0f64 / 1e4).sqrt();
        assert!((r.theta_hat - 3.0).abs() < band, "{}", r.theta_hat);
        assert!(r.iterations > 0 && r.iterations <= MAX_ROOT_ITERATIONS);
        // The plug-in variance sits between the lower bound and σ².
        assert!(r.asymptotic_variance > 4.0 && r.asymptotic_variance < asym_var_one(3.0, 1.0, 1.0).unwrap());
        let weights: Vec<f64> = s
            .transitions()
            .map(|(x0, _)| optimal_weight(x0, r.theta_hat, 1.0, 1.0).unwrap())
            .collect();
        let check = csum(s.transitions().zip(&weights).map(|((x0, x1), g)| {
            g * (x1 * x1 - (-2.0f64).exp() * x0 * x0 - (r.theta_hat + 1.0) * gain(1.0, 1.0))
        }));
        assert!(check.abs() < 1e-6);
    }

    #[test]
    fn optimal_no_sign_change() {
        let s = series(1e-3, &[1e-3; 10], 1.0);
        let b = RootBracket::new(-0.49, 50.0, 1e-10).unwrap();
        assert!(matches!(
            estimate_theta_optimal(&s, 1.0, &b),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn optimal_bracket_expands() {
        let c = (201.0f64).sqrt();
        let s = series(c, &[c; 10], 1.0);
        let b = RootBracket::new(-0.49, 50.0, 1e-10).unwrap();
        let r = estimate_theta_optimal(&s, 1.0, &b).unwrap();
        assert!((r.theta_hat - 200.0).abs() < 1e-8);
    }

    #[test]
    fn root_solve_cases() {
        let b = RootBracket::new(-0.4, 10.0, 1e-10).unwrap();
        let (root, iters) = root_solve(|x| x - 2.0, &b).unwrap();
        assert!((root - 2.0).abs() <= 1e-10);
        assert!(iters <= 5);
        assert_eq!(root_solve(|x| x + 0.4, &b).unwrap(), (-0.4, 0));
        assert_eq!(root_solve(|x| x - 10.0, &b).unwrap(), (10.0, 0));
        assert!(matches!(root_solve(|x| x + 1.0, &b), Err(Error::NoSignChange { .. })));
        let (root, _) = root_solve(|x| (x - 1.0).powi(3) - 1e-3, &b).unwrap();
        assert!((root - 1.1).abs() < 1e-9);
        let (root, _) = root_solve(|x| (x - 0.5).signum(), &b).unwrap();
        assert!((root - 0.5).abs() < 1e-10);
        assert!(RootBracket::new(-0.6, 1.0, 1e-10).is_err());
        assert!(RootBracket::new(1.0, 1.0, 1e-10).is_err());
        assert!(RootBracket::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn hn_reduces_to_gn() {
        let s = simulate(1.5, 0.9, 0.6, 200, 1.0, 5);
        let spec = EstimatingFunctionSpec::two_eigen(1.0, 0.0);
        for theta in [-0.3, 0.5, 1.5, 4.0] {
            let h = hn_value(&s, theta, 0.9, &spec).unwrap();
            let g = gn_value(&s, theta, 0.9).unwrap();
            assert!((h - g).abs() < 1e-11 * 200.0, "{h} vs {g}");
        }
        let zero = EstimatingFunctionSpec::two_eigen(0.0, 0.0);
        assert_eq!(hn_value(&s, 1.0, 0.9, &zero).unwrap(), 0.0);
    }

    #[test]
    fn hn_collapsed_sums_match_direct_evaluation() {
        let s = simulate(3.0, 1.0, 3.0, 300, 0.1, 6);
        let spec = EstimatingFunctionSpec::two_eigen(2.0, 1.0);
        let sums = TwoEigenSums::new(&s, 1.0);
        for theta in [-0.45, 0.0, 3.0, 20.0] {
            let direct = hn_value(&s, theta, 1.0, &spec).unwrap();
            let fast = sums.value(theta, &spec);
            assert!((direct - fast).abs() < 1e-10 * 300.0, "{direct} vs {fast}");
        }
    }

    fn stationary_draw(theta: f64, alpha: f64, rng: &mut RandomSource) -> f64 {
        sample_gamma(theta + 1.0, 1.0 / alpha, rng).unwrap().sqrt()
    }

    #[test]
    fn eigen_increments_are_centered_and_uncorrelated() {
        let p = ModelParams::new(3.0, 1.0).unwrap();
        let delta = 0.5;
        let s = SamplingScheme::new(delta, 1).unwrap();
        let phi1 = Eigenfunction::new(1, &p).unwrap();
        let phi2 = Eigenfunction::new(2, &p).unwrap();
        let (d1, d2) = ((-phi1.eigenvalue() * delta).exp(), (-phi2.eigenvalue() * delta).exp());
        let mut rng = RandomSource::new(7);
        let mut inc1 = Vec::new();
        let mut inc2 = Vec::new();
        for _ in 0..100_000 {
            let x0 = stationary_draw(3.0, 1.0, &mut rng);
            let x1 = sample_modified_path(&p, &s, x0, &mut rng).unwrap().values()[0];
            inc1.push(phi1.value(x1) - d1 * phi1.value(x0));
            inc2.push(phi2.value(x1) - d2 * phi2.value(x0));
        }
        for inc in [&inc1, &inc2] {
            let (m, se) = mean_se(inc);
            assert!(m.abs() < 4.0 * se, "{m} ± {se}");
        }
        let cross: Vec<f64> = inc1.iter().zip(&inc2).map(|(a, b)| a * b).collect();
        let (m, se) = mean_se(&cross);
        assert!(m.abs() < 4.0 * se, "α₁₂ = {m} ± {se}");
    }

    #[test]
    fn hn_at_truth_has_zero_mean_over_stationary_series() {
        let spec = EstimatingFunctionSpec::two_eigen(2.0, 1.0);
        let p = ModelParams::new(3.0, 1.0).unwrap();
        let sch = SamplingScheme::new(1.0, 50).unwrap();
        let root = RandomSource::new(8);
        let vals: Vec<f64> = (0..4000)
            .map(|r| {
                let mut rng = root.split(r);
                let x0 = stationary_draw(3.0, 1.0, &mut rng);
                let s = sample_modified_path(&p, &sch, x0, &mut rng).unwrap();
                hn_value(&s, 3.0, 1.0, &spec).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&vals);
        assert!(m.abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn two_eigen_reduces_to_explicit() {
        let s = simulate(1.0, 1.0, 0.8, 1000, 1.0, 9);
        let spec = EstimatingFunctionSpec::two_eigen(1.0, 0.0);
        let b = RootBracket::default();
        let r = estimate_theta_two_eigen(&s, 1.0, &spec, &b).unwrap();
        let e = estimate_theta_explicit(&s, 1.0).unwrap();
        assert!((r.theta_hat - e.theta_hat).abs() <= 2.0 * b.tol);
        assert!((r.asymptotic_variance - asym_var_one(r.theta_hat, 1.0, 0.8).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn two_eigen_on_long_simulation() {
        let s = simulate(3.0, 1.0, 3.0, 10_000, 0.1, 10);
        let spec = EstimatingFunctionSpec::two_eigen(2.0, 1.0);
        let r = estimate_theta_two_eigen(&s, 1.0, &spec, &RootBracket::default()).unwrap();
        let band = 4.0 * (asym_var_two(&spec, 3.0, 1.0, 3.0).unwrap() / 1e4).sqrt();
        assert!((r.theta_hat - 3.0).abs() < band, "{}", r.theta_hat);
        assert!(hn_value(&s, r.theta_hat, 1.0, &spec).unwrap().abs() < 1e-6);
    }

    #[test]
    fn two_eigen_picks_the_largest_root() {
        // Large θ₀ puts both roots of the quadratic inside the parameter space.
        let s = simulate(8.0, 1.0, 3.0, 2000, 3.0, 11);
        let spec = EstimatingFunctionSpec::two_eigen(2.0, 1.0);
        let sums = TwoEigenSums::new(&s, 1.0);
        let r = estimate_theta_two_eigen(&s, 1.0, &spec, &RootBracket::default()).unwrap();
        assert!((r.theta_hat - 8.0).abs() < 1.0, "{}", r.theta_hat);
        for i in 1..=200 {
            let t = r.theta_hat + 0.05 * i as f64;
            assert!(sums.value(t, &spec) > 0.0);
        }
    }

    #[test]
    fn two_eigen_degenerate_weights() {
        let s = simulate(1.0, 1.0, 0.5, 50, 1.0, 12);
        let b = RootBracket::default();
        let e = decay(1.0, 0.5);
        let beta1 = -(1.0 + e) / (b.lo + 2.0);
        let spec = EstimatingFunctionSpec::two_eigen(beta1, 1.0);
        assert!(matches!(
            estimate_theta_two_eigen(&s, 1.0, &spec, &b),
            Err(Error::WeightDegenerate { .. })
        ));
        let zero = EstimatingFunctionSpec::two_eigen(0.0, 0.0);
        assert!(matches!(
            estimate_theta_two_eigen(&s, 1.0, &zero, &b),
            Err(Error::WeightDegenerate { .. })
        ));
    }

    #[test]
    fn asym_var_one_cases() {
        let got = asym_var_one(3.0, 1.0, 1.0).unwrap();
        let e2 = (-2.0f64).exp();
        assert!((got - 4.0 * (1.0 + e2) / (1.0 - e2)).abs() < 1e-14);
        assert!((got - 5.252_141_141_997_325).abs() < 1e-13);
        assert!((asym_var_one(3.0, 1.0, 40.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(asym_var_one(3.0, 1.0, 1e-7).unwrap() > 1e6);
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let v = asym_var_one(0.5, 1.0, 0.05 * i as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn asym_var_two_cases() {
        let spec = EstimatingFunctionSpec::two_eigen(2.0, 1.0);
        assert!((asym_var_two(&spec, 3.0, 1.0, 3.0).unwrap() - 3.652_791_328_8).abs() < 1e-9);
        assert!((asym_var_two(&spec, 3.0, 1.0, 50.0).unwrap() - 40.0 / 11.0).abs() < 1e-14);
        assert!((two_eigen_limit(2.0, 1.0, 3.0).unwrap() - 40.0 / 11.0).abs() < 1e-15);
        assert_eq!(asym_var_two_optimal_limit(3.0).unwrap(), 40.0 / 11.0);
        let degenerate = EstimatingFunctionSpec::two_eigen(0.0, 0.0);
        assert!(asym_var_two(&degenerate, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_limit_improvement_values() {
        assert_eq!(optimal_limit_improvement(0.0).unwrap(), 0.2);
        assert!((optimal_limit_improvement(-0.499).unwrap() - 0.25).abs() < 1e-3);
        let theta = -0.5 + 1e-12;
        let rel = 1.0 - asym_var_two_optimal_limit(theta).unwrap() / (theta + 1.0);
        assert!((rel - 0.25).abs() < 1e-11);
        for theta in [-0.4, 0.0, 3.0, 50.0] {
            let rel = 1.0 - asym_var_two_optimal_limit(theta).unwrap() / (theta + 1.0);
            assert!((rel - optimal_limit_improvement(theta).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn optimal_ratio_is_stationary_point_of_limit() {
        for theta in [-0.4, 0.0, 3.0] {
            let h = 1e-5;
            let (b1, b2) = (2.0, 1.0);
            let d1 = (two_eigen_limit(b1 + h, b2, theta).unwrap() - two_eigen_limit(b1 - h, b2, theta).unwrap())
                / (2.0 * h);
            let d2 = (two_eigen_limit(b1, b2 + h, theta).unwrap() - two_eigen_limit(b1, b2 - h, theta).unwrap())
                / (2.0 * h);
            assert!(d1.abs() < 1e-8 && d2.abs() < 1e-8, "θ {theta}: {d1} {d2}");
            let min = asym_var_two_optimal_limit(theta).unwrap();
            assert!((two_eigen_limit(b1, b2, theta).unwrap() - min).abs() < 1e-13 * min);
            assert!(two_eigen_limit(1.0, 1.0, theta).unwrap() > min);
        }
    }

    #[test]
    fn variance_ordering() {
        for theta in [-0.4, 0.0, 3.0] {
            let lim = asym_var_two_optimal_limit(theta).unwrap();
            assert!(lim < theta + 1.0);
            for ad in [0.1, 1.0, 5.0, 15.0] {
                assert!(theta + 1.0 < asym_var_one(theta, 1.0, ad).unwrap());
            }
        }
    }

    #[test]
    fn dunkl_mapping() {
        assert_eq!(dunkl_k_from_theta(0.0).unwrap(), (0.5, JumpActivity::Finite));
        assert_eq!(dunkl_k_from_theta(-0.5).unwrap(), (0.0, JumpActivity::Infinite));
        assert_eq!(dunkl_k_from_theta(3.0).unwrap(), (3.5, JumpActivity::Finite));
        assert_eq!(dunkl_k_from_theta(-0.2).unwrap().1, JumpActivity::Infinite);
        assert!(dunkl_k_from_theta(-0.6).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(csum(xs), 2.0);
    }

    proptest! {
        #[test]
        fn proportionality_holds(
            values in prop::collection::vec(0.05f64..5.0, 1..40),
            x0 in 0.05f64..5.0,
            alpha in 0.2f64..3.0,
            delta in 0.05f64..3.0,
            theta in -0.49f64..20.0,
        ) {
            let s = series(x0, &values, delta);
            let g = gn_value(&s, theta, alpha).unwrap();
            let gt = cir_linear_gn(&s, theta, alpha).unwrap();
            let scale = s.transitions().map(|(a, b)| a * a + b * b).sum::<f64>()
                + values.len() as f64 * (theta + 1.0) / alpha;
            prop_assert!((gt + (theta + 1.0) / alpha * g).abs() <= 1e-12 * scale);
        }

        #[test]
        fn linear_root_is_explicit_estimate(
            values in prop::collection::vec(0.05f64..5.0, 1..40),
            x0 in 0.05f64..5.0,
            alpha in 0.2f64..3.0,
            delta in 0.05f64..3.0,
        ) {
            let s = series(x0, &values, delta);
            let a = cir_linear_root(&s, alpha).unwrap();
            let b = estimate_theta_explicit(&s, alpha).unwrap().theta_hat;
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn optimal_function_decreases(
            values in prop::collection::vec(0.05f64..5.0, 1..20),
            x0 in 0.05f64..5.0,
            t in -0.49f64..10.0,
            dt in 0.01f64..5.0,
        ) {
            let s = series(x0, &values, 0.7);
            prop_assert!(optimal_gn(&s, t + dt, 1.1).unwrap() < optimal_gn(&s, t, 1.1).unwrap());
        }

        #[test]
        fn asym_var_two_scale_invariant(
            b1 in 0.1f64..5.0, b2 in 0.1f64..5.0, c in prop::sample::select(vec![-3.0, 0.5, 7.0]),
            theta in -0.45f64..10.0, ad in 0.05f64..5.0,
        ) {
            let a = asym_var_two(&EstimatingFunctionSpec::two_eigen(b1, b2), theta, 1.0, ad).unwrap();
            let b = asym_var_two(&EstimatingFunctionSpec::two_eigen(c * b1, c * b2), theta, 1.0, ad).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn two_eigen_with_zero_second_weight_is_one_eigen(theta in -0.45f64..10.0, ad in 0.01f64..10.0) {
            let a = asym_var_two(&EstimatingFunctionSpec::two_eigen(1.0, 0.0), theta, 1.0, ad).unwrap();
            let b = asym_var_one(theta, 1.0, ad).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
