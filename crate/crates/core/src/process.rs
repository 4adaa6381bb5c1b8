//! Path simulation: the modified Bessel process, the raw Bessel process on
//! its exponential clock, an Euler cross-check, and Dunkl sign overlays.
//!
//! The squared modified process `Y = X²` is a CIR diffusion
//! `dY = 2√Y dB + (2θ + 2 − 2αY) dt`, whose transition law is a scaled
//! noncentral chi-square. All exact samplers draw from that law.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    check_theta, fmt_sig17, ModelParams, ObservationSeries, SamplingScheme, StateSpace,
};
use crate::special::{sample_noncentral_chisq, RandomSource};

/// Reflection floor of the Euler scheme.
pub const EULER_FLOOR: f64 = 1e-8;
/// Largest tolerated fraction of clamped Euler steps.
pub const EULER_MAX_CLAMP_FRACTION: f64 = 1e-3;
/// Multiplicity at which Dunkl jump activity switches from infinite to
/// finite: the modulus (index `k − 1/2`) stops hitting 0 there.
pub const DUNKL_ACTIVITY_THRESHOLD: f64 = 0.5;

/// Law of `Y_Δ = X_Δ²` given `Y_0`: `scale_c · χ²(df, noncentrality)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirTransitionParams {
    pub scale_c: f64,
    pub df: f64,
    pub noncentrality: f64,
}

impl CirTransitionParams {
    pub fn mean(&self) -> f64 {
        self.scale_c * (self.df + self.noncentrality)
    }

    pub fn variance(&self) -> f64 {
        self.scale_c * self.scale_c * (2.0 * self.df + 4.0 * self.noncentrality)
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Result<f64> {
        Ok(self.scale_c * sample_noncentral_chisq(self.df, self.noncentrality, rng)?)
    }
}

/// Transition parameters of the squared modified process over `delta`.
pub fn cir_transition_params(
    p: &ModelParams,
    delta: f64,
    y_prev: f64,
) -> Result<CirTransitionParams> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::NonPositiveDelta { delta });
    }
    if !(y_prev >= 0.0 && y_prev.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "y_prev",
            value: y_prev,
            reason: "must be finite and non-negative",
        });
    }
    let two_a = 2.0 * p.alpha();
    let decay = (-two_a * delta).exp();
    let scale_c = -(-two_a * delta).exp_m1() / two_a;
    Ok(CirTransitionParams {
        scale_c,
        df: 2.0 * p.theta() + 2.0,
        noncentrality: y_prev * decay / scale_c,
    })
}

/// Squared-Bessel transition over elapsed time `t` (the α → 0 limit of
/// [`cir_transition_params`]): `scale_c = t`, `noncentrality = y_prev / t`.
pub fn squared_bessel_transition(theta: f64, t: f64, y_prev: f64) -> Result<CirTransitionParams> {
    check_theta(theta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "t",
            value: t,
            reason: "elapsed time must be positive",
        });
    }
    Ok(CirTransitionParams {
        scale_c: t,
        df: 2.0 * theta + 2.0,
        noncentrality: y_prev / t,
    })
}

/// Exact-in-law observations of the modified Bessel process on `iΔ`.
pub fn sample_modified_path(
    p: &ModelParams,
    s: &SamplingScheme,
    x0: f64,
    rng: &mut RandomSource,
) -> Result<ObservationSeries> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::InvalidObservation { index: 0, value: x0 });
    }
    let mut values = Vec::with_capacity(s.n());
    let base = cir_transition_params(p, s.delta(), 0.0)?;
    let ratio = (-2.0 * p.alpha() * s.delta()).exp() / base.scale_c;
    let mut y = x0 * x0;
    for step in 1..=s.n() {
        let law = CirTransitionParams {
            noncentrality: y * ratio,
            ..base
        };
        y = law.sample(rng)?;
        if y <= 0.0 {
            return Err(Error::ZeroState { step });
        }
        values.push(y.sqrt());
    }
    ObservationSeries::new(x0, values, *s)
}

/// Time-stamped path on an arbitrary grid; `times[0]` is the start.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    times: Vec<f64>,
    values: Vec<f64>,
    state: StateSpace,
}

impl FinePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, state: StateSpace) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = (1..times.len()).find(|&i| !(times[i] > times[i - 1])) {
            return Err(Error::InvalidTimes { index: i });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| !state.admits(v)) {
            return Err(Error::InvalidObservation { index: i, value: v });
        }
        Ok(Self {
            times,
            values,
            state,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
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

    /// Same `index,time,value` schema as [`ObservationSeries::write_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["index", "time", "value"]).map_err(io)?;
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            w.write_record([i.to_string(), fmt_sig17(*t), fmt_sig17(*v)])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Euler–Maruyama path and the number of reflections at [`EULER_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct EulerPath {
    pub path: FinePath,
    pub clamped: usize,
}

/// Euler–Maruyama discretization of the modified process with reflection at
/// [`EULER_FLOOR`]. Carries an O(dt) weak bias; a cross-check only.
pub fn sample_euler_path(
    p: &ModelParams,
    dt: f64,
    steps: usize,
    x0: f64,
    rng: &mut RandomSource,
) -> Result<EulerPath> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument {
            name: "dt",
            value: dt,
            reason: "step must be positive",
        });
    }
    if dt * p.alpha() > 0.5 {
        return Err(Error::StepSizeTooLarge {
            value: dt * p.alpha(),
        });
    }
    if steps == 0 {
        return Err(Error::EmptyScheme);
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::InvalidObservation { index: 0, value: x0 });
    }
    let push = p.theta() + 0.5;
    let sqrt_dt = dt.sqrt();
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(x0);
    let mut x = x0;
    let mut clamped = 0;
    for k in 1..=steps {
        x += (push / x - p.alpha() * x) * dt + sqrt_dt * rng.standard_normal();
        if x < EULER_FLOOR {
            x = EULER_FLOOR;
            clamped += 1;
        }
        times.push(k as f64 * dt);
        values.push(x);
    }
    if clamped as f64 > EULER_MAX_CLAMP_FRACTION * steps as f64 {
        return Err(Error::ClampLimitExceeded { clamped, steps });
    }
    Ok(EulerPath {
        path: FinePath::new(times, values, StateSpace::Positive)?,
        clamped,
    })
}

/// Bessel-clock times `τ_i = (e^{2αiΔ} − 1)/(2α)` for `i = 1..n`.
pub fn exponential_grid(alpha: f64, s: &SamplingScheme) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonPositiveAlpha { alpha });
    }
    let exponent = 2.0 * alpha * s.n() as f64 * s.delta();
    if exponent >= f64::MAX.ln() {
        return Err(Error::OverflowHorizon { exponent });
    }
    Ok((1..=s.n())
        .map(|i| (2.0 * alpha * s.time(i)).exp_m1() / (2.0 * alpha))
        .collect())
}

/// Exact Bessel path of index θ sampled at `times` (all > 0, increasing),
/// started from `y0` at time 0. The returned path includes `(0, y0)`.
pub fn sample_bessel_path(
    theta: f64,
    times: &[f64],
    y0: f64,
    rng: &mut RandomSource,
) -> Result<FinePath> {
    check_theta(theta)?;
    bessel_path_with_df(2.0 * theta + 2.0, times, y0, rng)
}

/// Squared-Bessel stepping for any `df ≥ 1`; `df = 1` is the reflected
/// Brownian modulus of a Dunkl process with `k = 0`.
fn bessel_path_with_df(df: f64, times: &[f64], y0: f64, rng: &mut RandomSource) -> Result<FinePath> {
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err(Error::InvalidObservation { index: 0, value: y0 });
    }
    let mut all_times = Vec::with_capacity(times.len() + 1);
    let mut values = Vec::with_capacity(times.len() + 1);
    all_times.push(0.0);
    values.push(y0);
    let mut prev_t = 0.0;
    let mut sq = y0 * y0;
    for (i, &t) in times.iter().enumerate() {
        if !(t > prev_t) || !t.is_finite() {
            return Err(Error::InvalidTimes { index: i + 1 });
        }
        let dt = t - prev_t;
        let law = CirTransitionParams {
            scale_c: dt,
            df,
            noncentrality: sq / dt,
        };
        sq = law.sample(rng)?;
        if sq <= 0.0 {
            return Err(Error::ZeroState { step: i + 1 });
        }
        all_times.push(t);
        values.push(sq.sqrt());
        prev_t = t;
    }
    FinePath::new(all_times, values, StateSpace::Positive)
}

/// Space-time transformation `X_{iΔ} = e^{−αiΔ} Y_{τ_i}`.
///
/// `bessel_values` holds `Y_{τ_0}, …, Y_{τ_n}` on [`exponential_grid`]
/// (with `τ_0 = 0`); signs, if any, are carried over unchanged.
pub fn bessel_to_modified(
    bessel_values: &[f64],
    p: &ModelParams,
    s: &SamplingScheme,
) -> Result<ObservationSeries> {
    rescale_bessel(bessel_values, p.alpha(), s)
}

fn rescale_bessel(bessel_values: &[f64], alpha: f64, s: &SamplingScheme) -> Result<ObservationSeries> {
    if bessel_values.len() != s.n() + 1 {
        return Err(Error::LengthMismatch {
            expected: s.n() + 1,
            actual: bessel_values.len(),
        });
    }
    let state = if bessel_values.iter().any(|&v| v < 0.0) {
        StateSpace::Signed
    } else {
        StateSpace::Positive
    };
    let values = bessel_values[1..]
        .iter()
        .enumerate()
        .map(|(k, &y)| (-alpha * s.time(k + 1)).exp() * y)
        .collect();
    ObservationSeries::with_state(bessel_values[0], values, *s, state)
}

/// Multiplicity parameter of a one-dimensional Dunkl process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DunklParams {
    k: f64,
}

impl DunklParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "k",
                value: k,
                reason: "multiplicity must be non-negative",
            });
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Index of the modulus Bessel process, `k − 1/2`.
    pub fn bessel_index(&self) -> f64 {
        self.k - 0.5
    }
}

/// Attaches reflection signs to a positive path.
///
/// On each step `[t_{i−1}, t_i]` the sign flips with probability
/// `1 − exp(−k (t_i − t_{i−1}) / x_{i−1}²)`, a per-step thinning of the jump
/// intensity `k/x²`. The modulus of the result equals the input exactly.
pub fn overlay_dunkl_signs(
    path: &FinePath,
    d: &DunklParams,
    rng: &mut RandomSource,
) -> Result<FinePath> {
    if path.state() != StateSpace::Positive {
        return Err(Error::InvalidArgument {
            name: "path",
            value: f64::NAN,
            reason: "sign overlay needs an unsigned path",
        });
    }
    let times = path.times();
    let xs = path.values();
    let mut signed = Vec::with_capacity(xs.len());
    let mut sign = 1.0;
    for i in 0..xs.len() {
        if i > 0 && d.k() > 0.0 {
            let dt = times[i] - times[i - 1];
            let x = xs[i - 1];
            let p_flip = -(-d.k() * dt / (x * x)).exp_m1();
            if rng.uniform() < p_flip {
                sign = -sign;
            }
        }
        signed.push(sign * xs[i]);
    }
    FinePath::new(times.to_vec(), signed, StateSpace::Signed)
}

/// `substeps` equal sub-intervals inside each gap of `0, times…`.
pub fn refine_grid(times: &[f64], substeps: usize) -> Vec<f64> {
    let substeps = substeps.max(1);
    let mut out = Vec::with_capacity(times.len() * substeps);
    let mut prev = 0.0;
    for &t in times {
        for j in 1..substeps {
            out.push(prev + (t - prev) * j as f64 / substeps as f64);
        }
        out.push(t);
        prev = t;
    }
    out
}

/// A Dunkl path simulated through its modulus: an exact Bessel path of index
/// `k − 1/2` on the refined exponential clock, overlaid with reflection
/// signs, then mapped to the stationary time scale.
///
/// Supported multiplicities are `k = 0` and `k ≥ 1/2`; in between the jump
/// activity is infinite and per-step thinning is meaningless.
#[derive(Debug, Clone)]
pub struct DunklSimulation {
    /// Signed path on the refined Bessel clock.
    pub bessel_path: FinePath,
    /// Signed observations `X_{iΔ}`, `i = 0..n`.
    pub series: ObservationSeries,
}

pub fn simulate_dunkl_series(
    d: &DunklParams,
    alpha: f64,
    s: &SamplingScheme,
    x0: f64,
    substeps: usize,
    rng: &mut RandomSource,
) -> Result<DunklSimulation> {
    if d.k() > 0.0 && d.k() < DUNKL_ACTIVITY_THRESHOLD {
        return Err(Error::InvalidArgument {
            name: "k",
            value: d.k(),
            reason: "multiplicities in (0, 1/2) have infinite jump activity",
        });
    }
    let grid = exponential_grid(alpha, s)?;
    let fine = refine_grid(&grid, substeps);
    let mut path_rng = rng.split(0);
    let mut sign_rng = rng.split(1);
    let modulus = bessel_path_with_df(2.0 * d.bessel_index() + 2.0, &fine, x0, &mut path_rng)?;
    let signed = overlay_dunkl_signs(&modulus, d, &mut sign_rng)?;
    let substeps = substeps.max(1);
    let at_grid: Vec<f64> = signed.values().iter().step_by(substeps).copied().collect();
    let series = rescale_bessel(&at_grid, alpha, s)?;
    Ok(DunklSimulation {
        bessel_path: signed,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{conditional_mean_sq, conditional_var_sq};
    use bessel_testkit::stats::{ks_critical_two_sample, ks_two_sample, mean_se, variance_se};

    fn params(theta: f64, alpha: f64) -> ModelParams {
        ModelParams::new(theta, alpha).unwrap()
    }

    #[test]
    fn transition_at_stationary_point() {
        let delta = std::f64::consts::LN_2 / 2.0;
        let law = cir_transition_params(&params(3.0, 1.0), delta, 4.0).unwrap();
        assert!((law.scale_c - 0.25).abs() < 1e-15);
        assert_eq!(law.df, 8.0);
        assert!((law.noncentrality - 8.0).abs() < 1e-13);
        assert!((law.mean() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn transition_mean_matches_conditional_mean() {
        let delta = std::f64::consts::LN_2 / 2.0;
        let p = params(3.0, 1.0);
        let law = cir_transition_params(&p, delta, 1.0).unwrap();
        assert!((law.noncentrality - 2.0).abs() < 1e-13);
        assert!((law.mean() - 2.5).abs() < 1e-14);
        for &(theta, alpha, dt, y) in &[(0.0, 0.3, 0.7, 2.0), (5.5, 2.0, 0.01, 0.3), (-0.4, 1.0, 3.0, 9.0)] {
            let p = params(theta, alpha);
            let law = cir_transition_params(&p, dt, y).unwrap();
            let want = conditional_mean_sq(y.sqrt(), &p, dt).unwrap();
            assert!((law.mean() - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn long_horizon_forgets_start() {
        let law = cir_transition_params(&params(0.0, 1.0), 50.0, 3.0).unwrap();
        assert!(law.noncentrality < 1e-40);
        assert!((law.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transition_rejects_bad_inputs() {
        let p = params(1.0, 1.0);
        assert!(cir_transition_params(&p, 0.0, 1.0).is_err());
        assert!(cir_transition_params(&p, 1.0, -1.0).is_err());
    }

    #[test]
    fn stationary_second_moment() {
        let p = params(3.0, 1.0);
        let s = SamplingScheme::new(2.0, 5).unwrap();
        let root = RandomSource::new(21);
        let ys: Vec<f64> = (0..100_000)
            .map(|r| {
                let mut rng = root.split(r);
                let path = sample_modified_path(&p, &s, 0.1, &mut rng).unwrap();
                path.values()[4].powi(2)
            })
            .collect();
        let (m, se) = mean_se(&ys);
        assert!((m - 4.0).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn one_step_conditional_mean() {
        let p = params(3.0, 1.0);
        let s = SamplingScheme::new(0.5, 1).unwrap();
        let mut rng = RandomSource::new(22);
        let ys: Vec<f64> = (0..100_000)
            .map(|_| sample_modified_path(&p, &s, 2.0, &mut rng).unwrap().values()[0].powi(2))
            .collect();
        let (m, se) = mean_se(&ys);
        let want = conditional_mean_sq(2.0, &p, 0.5).unwrap();
        assert!((m - want).abs() < 4.0 * se);
    }

    #[test]
    fn vanishing_step_is_continuous() {
        let p = params(1.0, 1.0);
        let mut prev = f64::INFINITY;
        for delta in [1e-1, 1e-3, 1e-5] {
            let s = SamplingScheme::new(delta, 1).unwrap();
            let mut rng = RandomSource::new(23);
            let ys: Vec<f64> = (0..20_000)
                .map(|_| sample_modified_path(&p, &s, 1.5, &mut rng).unwrap().values()[0].powi(2))
                .collect();
            let (v, _) = variance_se(&ys);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn modified_path_rejects_bad_start() {
        let p = params(1.0, 1.0);
        let s = SamplingScheme::new(1.0, 3).unwrap();
        let mut rng = RandomSource::new(0);
        assert!(sample_modified_path(&p, &s, 0.0, &mut rng).is_err());
    }

    #[test]
    fn euler_drift_root_has_zero_mean_displacement() {
        let (theta, alpha) = (3.0, 1.0);
        let p = params(theta, alpha);
        let x_star = ((2.0 * theta + 1.0) / (2.0 * alpha)).sqrt();
        assert!(((theta + 0.5) / x_star - alpha * x_star).abs() < 1e-15);
        let mut rng = RandomSource::new(24);
        let dx: Vec<f64> = (0..100_000)
            .map(|_| sample_euler_path(&p, 1e-3, 1, x_star, &mut rng).unwrap().path.values()[1] - x_star)
            .collect();
        let (m, se) = mean_se(&dx);
        assert!(m.abs() < 4.0 * se);
    }

    #[test]
    fn euler_second_moment() {
        let p = params(3.0, 1.0);
        let mut rng = RandomSource::new(25);
        let dt = 1e-2;
        let run = sample_euler_path(&p, dt, 2_000_000, 2.0, &mut rng).unwrap();
        assert_eq!(run.clamped, 0);
        // Thin to roughly independent points (relaxation time 1/(2α)).
        let ys: Vec<f64> = run.path.values()[1000..].iter().step_by(300).map(|x| x * x).collect();
        let (m, se) = mean_se(&ys);
        assert!((m - 4.0).abs() < 4.0 * se + 0.05, "{m} ± {se}");
    }

    #[test]
    fn euler_step_limit() {
        let p = params(1.0, 2.0);
        let mut rng = RandomSource::new(0);
        assert!(matches!(
            sample_euler_path(&p, 0.3, 10, 1.0, &mut rng),
            Err(Error::StepSizeTooLarge { .. })
        ));
    }

    #[test]
    fn euler_clamp_accounting() {
        // θ near −1/2 with a start at the floor: the path keeps hitting it.
        let p = params(-0.49, 1.0);
        let mut rng = RandomSource::new(26);
        let r = sample_euler_path(&p, 0.1, 1000, 1e-3, &mut rng);
        assert!(matches!(r, Err(Error::ClampLimitExceeded { .. })), "{r:?}");
    }

    #[test]
    fn euler_matches_exact_sampler_in_distribution() {
        let p = params(3.0, 1.0);
        let delta = 1.0;
        let n = 20_000;
        let x0 = 1.0;
        let mut rng = RandomSource::new(27);
        let s = SamplingScheme::new(delta, 1).unwrap();
        let exact: Vec<f64> = (0..n)
            .map(|_| sample_modified_path(&p, &s, x0, &mut rng).unwrap().values()[0])
            .collect();
        let euler: Vec<f64> = (0..n)
            .map(|_| {
                let run = sample_euler_path(&p, delta / 1024.0, 1024, x0, &mut rng).unwrap();
                *run.path.values().last().unwrap()
            })
            .collect();
        let d = ks_two_sample(&exact, &euler);
        assert!(d < ks_critical_two_sample(n, n), "D = {d}");
    }

    #[test]
    fn exponential_grid_doubling() {
        let s = SamplingScheme::new(std::f64::consts::LN_2 / 2.0, 3).unwrap();
        let tau = exponential_grid(1.0, &s).unwrap();
        for (got, want) in tau.iter().zip([0.5, 1.5, 3.5]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn exponential_grid_small_alpha_is_identity_clock() {
        let s = SamplingScheme::new(0.5, 4).unwrap();
        let tau = exponential_grid(1e-12, &s).unwrap();
        for (i, t) in tau.iter().enumerate() {
            assert!((t - s.time(i + 1)).abs() < 1e-9);
        }
        assert_eq!((2.0 * 1.0 * s.time(0)).exp_m1(), 0.0);
    }

    #[test]
    fn exponential_grid_overflow() {
        let s = SamplingScheme::new(1.0, 1000).unwrap();
        assert!(matches!(exponential_grid(1.0, &s), Err(Error::OverflowHorizon { .. })));
    }

    #[test]
    fn bessel_conditional_mean() {
        let theta = 1.5;
        let (y0, t) = (0.7, 2.0);
        let mut rng = RandomSource::new(28);
        let ys: Vec<f64> = (0..100_000)
            .map(|_| sample_bessel_path(theta, &[t], y0, &mut rng).unwrap().values()[1].powi(2))
            .collect();
        let (m, se) = mean_se(&ys);
        let want = y0 * y0 + (2.0 * theta + 2.0) * t;
        assert!((m - want).abs() < 4.0 * se, "{m} vs {want}");
    }

    #[test]
    fn bessel_near_lower_boundary() {
        let mut rng = RandomSource::new(29);
        let path = sample_bessel_path(-0.5 + 1e-6, &[0.5, 1.0, 2.0], 0.3, &mut rng).unwrap();
        assert!(path.values().iter().all(|&v| v > 0.0));
        assert!(sample_bessel_path(-0.5, &[1.0], 1.0, &mut rng).is_err());
        assert!(matches!(
            sample_bessel_path(1.0, &[1.0, 1.0], 1.0, &mut rng),
            Err(Error::InvalidTimes { index: 2 })
        ));
    }

    #[test]
    fn space_time_transform_of_constants() {
        let p = params(1.0, 0.8);
        let s = SamplingScheme::new(0.3, 4).unwrap();
        let x = bessel_to_modified(&[2.0; 5], &p, &s).unwrap();
        assert_eq!(x.x0(), 2.0);
        for (i, v) in x.values().iter().enumerate() {
            let want = 2.0 * (-0.8 * s.time(i + 1)).exp();
            assert!((v - want).abs() < 1e-15);
        }
        assert!(matches!(
            bessel_to_modified(&[2.0; 4], &p, &s),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bessel_pipeline_matches_direct_sampler() {
        let p = params(2.0, 1.0);
        let s = SamplingScheme::new(0.4, 1).unwrap();
        let x0 = 1.3;
        let tau = exponential_grid(p.alpha(), &s).unwrap();
        let mut rng = RandomSource::new(30);
        let n = 100_000;
        let via_bessel: Vec<f64> = (0..n)
            .map(|_| {
                let path = sample_bessel_path(p.theta(), &tau, x0, &mut rng).unwrap();
                bessel_to_modified(path.values(), &p, &s).unwrap().values()[0]
            })
            .collect();
        let direct: Vec<f64> = (0..n)
            .map(|_| sample_modified_path(&p, &s, x0, &mut rng).unwrap().values()[0])
            .collect();
        let sq: Vec<f64> = via_bessel.iter().map(|x| x * x).collect();
        let (m, se) = mean_se(&sq);
        let want = conditional_mean_sq(x0, &p, s.delta()).unwrap();
        assert!((m - want).abs() < 4.0 * se);
        let (v, vse) = variance_se(&sq);
        let want_v = conditional_var_sq(x0, &p, s.delta()).unwrap();
        assert!((v - want_v).abs() < 4.0 * vse);
        let d = ks_two_sample(&via_bessel, &direct);
        assert!(d < ks_critical_two_sample(n, n), "D = {d}");
    }

    #[test]
    fn dunkl_zero_multiplicity_never_flips() {
        let mut rng = RandomSource::new(31);
        let path = sample_bessel_path(0.5, &refine_grid(&[1.0, 2.0], 50), 0.01, &mut rng).unwrap();
        let signed = overlay_dunkl_signs(&path, &DunklParams::new(0.0).unwrap(), &mut rng).unwrap();
        assert_eq!(signed.values(), path.values());
    }

    #[test]
    fn dunkl_overlay_preserves_modulus() {
        let mut rng = RandomSource::new(32);
        let path = sample_bessel_path(0.0, &refine_grid(&[1.0, 3.0], 200), 0.5, &mut rng).unwrap();
        let signed = overlay_dunkl_signs(&path, &DunklParams::new(0.5).unwrap(), &mut rng).unwrap();
        assert!(signed.values().iter().any(|&v| v < 0.0));
        for (a, b) in signed.values().iter().zip(path.values()) {
            assert_eq!(a.abs(), *b);
        }
    }

    #[test]
    fn dunkl_flip_count_matches_integrated_intensity() {
        // Frozen path x(t) = 1 + t on [0, 2]: ∫ k/x² dt = k (1 − 1/3).
        let k = 1.5;
        let m = 2000;
        let times: Vec<f64> = (0..=m).map(|i| 2.0 * i as f64 / m as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 1.0 + t).collect();
        let path = FinePath::new(times.clone(), values, StateSpace::Positive).unwrap();
        let d = DunklParams::new(k).unwrap();
        // Left-point Riemann sum of the thinned intensities.
        let expected: f64 = (1..=m)
            .map(|i| -(-k * (times[i] - times[i - 1]) / (1.0 + times[i - 1]).powi(2)).exp_m1())
            .sum();
        assert!((expected - k * (2.0 / 3.0)).abs() < 2e-3);
        let root = RandomSource::new(33);
        let counts: Vec<f64> = (0..20_000)
            .map(|r| {
                let signed = overlay_dunkl_signs(&path, &d, &mut root.split(r)).unwrap();
                signed.values().windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64
            })
            .collect();
        let (mean, se) = mean_se(&counts);
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn dunkl_pipeline_modulus_is_bessel_index() {
        let d = DunklParams::new(1.5).unwrap();
        assert_eq!(d.bessel_index(), 1.0);
        let s = SamplingScheme::new(0.25, 20).unwrap();
        let mut rng = RandomSource::new(34);
        let sim = simulate_dunkl_series(&d, 1.0, &s, 0.5, 8, &mut rng).unwrap();
        assert_eq!(sim.series.len(), 20);
        assert_eq!(sim.bessel_path.len(), 20 * 8 + 1);
        for (i, v) in sim.series.values().iter().enumerate() {
            let y = sim.bessel_path.values()[(i + 1) * 8];
            assert_eq!(v.signum(), y.signum());
        }
        assert!(DunklParams::new(-0.1).is_err());
    }

    #[test]
    fn dunkl_zero_multiplicity_series_stays_positive() {
        let d = DunklParams::new(0.0).unwrap();
        let s = SamplingScheme::new(0.5, 30).unwrap();
        let sim = simulate_dunkl_series(&d, 1.0, &s, 0.5, 4, &mut RandomSource::new(35)).unwrap();
        assert_eq!(sim.series.state(), StateSpace::Positive);
        assert!(sim.series.values().iter().all(|&v| v > 0.0));
        let mid = DunklParams::new(0.25).unwrap();
        assert!(simulate_dunkl_series(&mid, 1.0, &s, 0.5, 4, &mut RandomSource::new(35)).is_err());
    }

    #[test]
    fn fine_path_validation() {
        assert!(FinePath::new(vec![0.0, 1.0], vec![1.0], StateSpace::Positive).is_err());
        assert!(FinePath::new(vec![0.0, 0.0], vec![1.0, 1.0], StateSpace::Positive).is_err());
        assert!(FinePath::new(vec![0.0, 1.0], vec![1.0, -1.0], StateSpace::Positive).is_err());
        assert!(FinePath::new(vec![0.0, 1.0], vec![1.0, -1.0], StateSpace::Signed).is_ok());
    }
}
