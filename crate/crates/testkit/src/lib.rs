//! Independent numerical oracles for the test suites.
//!
//! Nothing in here shares code with `bessel-mef`: the integrators, test
//! statistics and moment estimators are deliberately plain so that they can
//! serve as a second route to every number the library produces.

pub mod quad;
pub mod stats;

/// Central finite-difference first and second derivatives with a 7-point
/// stencil (truncation error O(h^6)).
pub fn derivatives<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> (f64, f64) {
    let fm3 = f(x - 3.0 * h);
    let fm2 = f(x - 2.0 * h);
    let fm1 = f(x - h);
    let f0 = f(x);
    let fp1 = f(x + h);
    let fp2 = f(x + 2.0 * h);
    let fp3 = f(x + 3.0 * h);
    let d1 = (-fm3 + 9.0 * fm2 - 45.0 * fm1 + 45.0 * fp1 - 9.0 * fp2 + fp3) / (60.0 * h);
    let d2 = (2.0 * fm3 - 27.0 * fm2 + 270.0 * fm1 - 490.0 * f0 + 270.0 * fp1 - 27.0 * fp2
        + 2.0 * fp3)
        / (180.0 * h * h);
    (d1, d2)
}
