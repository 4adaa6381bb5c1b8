use std::f64::consts::LN_2;

use super::gamma::ln_gamma_unchecked;
use crate::error::{Error, Result};

/// Hard cap on the number of Poisson-weighted terms in the density series.
pub const NC_SERIES_CAP: usize = 10_000;
const TERM_RTOL: f64 = 1e-16;

/// Log-density of a central chi-square with `df` degrees of freedom at `y > 0`.
pub fn central_chisq_ln_pdf(df: f64, y: f64) -> f64 {
    let k = 0.5 * df;
    (k - 1.0) * y.ln() - 0.5 * y - k * LN_2 - ln_gamma_unchecked(k)
}

/// Density of the noncentral chi-square at `y`, summed as
/// `Σ_j Pois(j; nc/2) · χ²_{df+2j}(y)`.
///
/// Summation starts at the largest term and walks outward in both
/// directions until a term drops below 1e-16 of the running sum.
pub fn noncentral_chisq_pdf(df: f64, noncentrality: f64, y: f64) -> Result<f64> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::InvalidDf { df });
    }
    if !(noncentrality >= 0.0 && noncentrality.is_finite()) {
        return Err(Error::NegativeNoncentrality { noncentrality });
    }
    if !(y > 0.0) || y.is_infinite() {
        return Err(Error::NonPositivePoint { y });
    }
    if noncentrality == 0.0 {
        return Ok(central_chisq_ln_pdf(df, y).exp());
    }

    let half_nc = 0.5 * noncentrality;
    let ln_half_nc = half_nc.ln();
    let ln_term = |j: f64| {
        -half_nc + j * ln_half_nc - ln_gamma_unchecked(j + 1.0) + central_chisq_ln_pdf(df + 2.0 * j, y)
    };

    // The terms are log-concave in j; the ratio t_{j+1}/t_j = 1 where
    // (j + 1)(df/2 + j) = nc·y/4.
    let b = 0.5 * df + 1.0;
    let disc = (0.5 * df - 1.0).powi(2) + noncentrality * y;
    let peak = (0.5 * (disc.sqrt() - b)).max(0.0).floor();

    let ln_peak = ln_term(peak);
    let mut sum = 1.0;
    let mut terms = 1usize;

    let mut j = peak + 1.0;
    loop {
        let t = (ln_term(j) - ln_peak).exp();
        sum += t;
        terms += 1;
        if t < TERM_RTOL * sum {
            break;
        }
        if terms >= NC_SERIES_CAP {
            return Err(Error::SeriesCapExceeded { cap: NC_SERIES_CAP });
        }
        j += 1.0;
    }
    let mut j = peak - 1.0;
    while j >= 0.0 {
        let t = (ln_term(j) - ln_peak).exp();
        sum += t;
        terms += 1;
        if t < TERM_RTOL * sum {
            break;
        }
        if terms >= NC_SERIES_CAP {
            return Err(Error::SeriesCapExceeded { cap: NC_SERIES_CAP });
        }
        j -= 1.0;
    }
    Ok(sum * ln_peak.exp())
}
