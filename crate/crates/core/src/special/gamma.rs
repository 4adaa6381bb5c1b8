use crate::error::{Error, Result};

// Lanczos approximation with g = 671/128 and 14 terms; relative accuracy in
// Γ is close to machine epsilon for x > 0.
const LANCZOS_G: f64 = 5.242_187_5;
const LANCZOS_C0: f64 = 0.999_999_999_999_997_1;
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_8e-4,
    -0.983_744_753_048_795_6e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_6e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Natural logarithm of Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_infinite() {
        return Err(Error::NonPositiveArgument { x });
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the series in its accurate range.
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    let mut y = x;
    let t = x + LANCZOS_G;
    let head = (x + 0.5) * t.ln() - t;
    let mut ser = LANCZOS_C0;
    for c in LANCZOS {
        y += 1.0;
        ser += c / y;
    }
    head + (SQRT_2PI * ser / x).ln()
}

/// Rising factorial `x (x+1) ⋯ (x+k-1)`; `pochhammer(x, 0) = 1`.
pub fn pochhammer(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (x + j as f64))
}
