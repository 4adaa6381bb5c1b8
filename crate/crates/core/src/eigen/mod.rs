//! Closed-form analytics of the modified Bessel generator
//! `L_θ f = ((θ + 1/2)/x − αx) f' + f''/2`.

mod quadrature;

pub use quadrature::{laguerre_rule, quadrature_expectation, LaguerreRule, QUADRATURE_NODES};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::process::cir_transition_params;
use crate::special::{ln_gamma, noncentral_chisq_pdf, pochhammer};

/// Highest supported eigenfunction order.
pub const MAX_EIGEN_ORDER: usize = 8;

/// Polynomial eigenfunction `φ_η(x) = Σ_k (−η)_k / ((θ+1)_k k!) (αx²)^k`
/// with eigenvalue `2αη`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction {
    eta: usize,
    alpha: f64,
    coefficients: Vec<f64>,
}

impl Eigenfunction {
    pub fn new(eta: usize, p: &ModelParams) -> Result<Self> {
        if eta == 0 || eta > MAX_EIGEN_ORDER {
            return Err(Error::UnsupportedOrder { eta });
        }
        let theta = p.theta();
        let mut coefficients = Vec::with_capacity(eta + 1);
        let mut factorial = 1.0;
        for k in 0..=eta as u32 {
            if k > 0 {
                factorial *= k as f64;
            }
            coefficients.push(
                pochhammer(-(eta as f64), k) / (pochhammer(theta + 1.0, k) * factorial),
            );
        }
        Ok(Self {
            eta,
            alpha: p.alpha(),
            coefficients,
        })
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    /// Coefficients of `(αx²)^k`, `k = 0..=η`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eigenvalue(&self) -> f64 {
        eigenvalue(self.eta, self.alpha)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_sq(x * x)
    }

    /// `φ_η` as a function of `x²`.
    pub fn value_sq(&self, x_sq: f64) -> f64 {
        let u = self.alpha * x_sq;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }
}

pub fn eigenfunction_value(eta: usize, x: f64, p: &ModelParams) -> Result<f64> {
    Ok(Eigenfunction::new(eta, p)?.value(x))
}

/// `λ_η = 2αη`.
pub fn eigenvalue(eta: usize, alpha: f64) -> f64 {
    2.0 * alpha * eta as f64
}

/// Invariant density `μ_θ(x) = 2α^{θ+1}/Γ(θ+1) · x^{2θ+1} e^{−αx²}`.
pub fn invariant_pdf(x: f64, p: &ModelParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositivePoint { y: x });
    }
    let (theta, alpha) = (p.theta(), p.alpha());
    let ln = std::f64::consts::LN_2 + (theta + 1.0) * alpha.ln() - ln_gamma(theta + 1.0)?
        + (2.0 * theta + 1.0) * x.ln()
        - alpha * x * x;
    Ok(ln.exp())
}

/// `E_μ[X^{2·order}] = Γ(order + θ + 1) / (α^order Γ(θ + 1))`.
pub fn invariant_moment(order: u32, p: &ModelParams) -> f64 {
    // The Gamma ratio is a finite rising factorial.
    pochhammer(p.theta() + 1.0, order) / p.alpha().powi(order as i32)
}

fn check_step(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDelta { delta })
    }
}

/// `E[X_Δ² | X_0 = x] = x² e^{−2αΔ} − ((θ+1)/α)(e^{−2αΔ} − 1)`.
pub fn conditional_mean_sq(x: f64, p: &ModelParams, delta: f64) -> Result<f64> {
    check_step(delta)?;
    let decay = (-2.0 * p.alpha() * delta).exp();
    let gain = -(-2.0 * p.alpha() * delta).exp_m1();
    Ok(x * x * decay + (p.theta() + 1.0) / p.alpha() * gain)
}

/// `Var[X_Δ² | X_0 = x] = ((1 − e^{−2αΔ})/α)·[((θ+1)/α)(1 − e^{−2αΔ}) + 2x² e^{−2αΔ}]`.
pub fn conditional_var_sq(x: f64, p: &ModelParams, delta: f64) -> Result<f64> {
    check_step(delta)?;
    let decay = (-2.0 * p.alpha() * delta).exp();
    let gain = -(-2.0 * p.alpha() * delta).exp_m1();
    let alpha = p.alpha();
    Ok(gain / alpha * ((p.theta() + 1.0) / alpha * gain + 2.0 * x * x * decay))
}

/// Density of `X_Δ` at `y` given `X_0 = x`, via the noncentral chi-square
/// law of `X_Δ²` and the Jacobian `2y`.
pub fn transition_pdf(x: f64, y: f64, p: &ModelParams, delta: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::NonPositivePoint { y });
    }
    let law = cir_transition_params(p, delta, x * x)?;
    let density_sq = noncentral_chisq_pdf(law.df, law.noncentrality, y * y / law.scale_c)?;
    Ok(density_sq / law.scale_c * 2.0 * y)
}
