//! Generalized Gauss–Laguerre rules for the weight `u^θ e^{−u} / Γ(θ+1)`.
//!
//! Under `u = αx²` this weight is exactly the invariant law of the modified
//! process, so a rule for exponent θ integrates against `μ_θ` for every α.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Nodes of the primary rule; the error estimate uses twice as many.
pub const QUADRATURE_NODES: usize = 128;
const QUADRATURE_RTOL: f64 = 1e-9;

/// Nodes in `u` and probability weights (summing to one).
#[derive(Debug, Clone)]
pub struct LaguerreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LaguerreRule {
    /// Golub–Welsch on the Jacobi matrix, then Newton polishing of every node
    /// and Christoffel weights from the orthonormal recurrence.
    pub fn new(theta: f64, n: usize) -> Self {
        let diag = |k: usize| 2.0 * k as f64 + theta + 1.0;
        let off = |k: usize| (k as f64 * (k as f64 + theta)).sqrt();
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            jacobi[(k, k)] = diag(k);
            if k + 1 < n {
                jacobi[(k, k + 1)] = off(k + 1);
                jacobi[(k + 1, k)] = off(k + 1);
            }
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        // Orthonormal recurrence: off(k+1) p_{k+1} = (u − diag(k)) p_k − off(k) p_{k−1}.
        let eval = |u: f64| -> (f64, f64, f64) {
            let (mut p_prev, mut p) = (0.0, 1.0);
            let (mut d_prev, mut d) = (0.0, 0.0);
            let mut sum_sq = 1.0;
            for k in 0..n {
                let b_next = off(k + 1);
                let b_k = off(k);
                let p_next = ((u - diag(k)) * p - b_k * p_prev) / b_next;
                let d_next = (p + (u - diag(k)) * d - b_k * d_prev) / b_next;
                p_prev = p;
                p = p_next;
                d_prev = d;
                d = d_next;
                if k + 1 < n {
                    sum_sq += p * p;
                }
            }
            (p, d, sum_sq)
        };

        let mut weights = Vec::with_capacity(n);
        for u in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, d, _) = eval(*u);
                let step = p / d;
                if !step.is_finite() || step.abs() > 1e-6 * u.abs().max(1e-300) {
                    break;
                }
                *u -= step;
            }
            let (_, _, sum_sq) = eval(*u);
            weights.push(if sum_sq.is_finite() { 1.0 / sum_sq } else { 0.0 });
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> (f64, f64) {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .fold((0.0, 0.0), |(s, a), (&u, &w)| {
                let v = f(u);
                (s + w * v, a + w * v.abs())
            })
    }
}

type RuleCache = RwLock<HashMap<(u64, usize), Arc<LaguerreRule>>>;

/// Rules are built once per (θ, n) and shared immutably afterwards.
pub fn laguerre_rule(theta: f64, n: usize) -> Arc<LaguerreRule> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (theta.to_bits(), n);
    if let Some(rule) = cache.read().expect("rule cache poisoned").get(&key) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(LaguerreRule::new(theta, n));
    let mut w = cache.write().expect("rule cache poisoned");
    Arc::clone(w.entry(key).or_insert(rule))
}

/// `∫ f dμ_θ` over `(0, ∞)` with a 128-node rule, checked against 256 nodes.
pub fn quadrature_expectation<F: Fn(f64) -> f64>(f: F, p: &ModelParams) -> Result<f64> {
    let alpha = p.alpha();
    let g = |u: f64| f((u / alpha).sqrt());
    let (coarse, _) = laguerre_rule(p.theta(), QUADRATURE_NODES).integrate(g);
    let (fine, fine_abs) = laguerre_rule(p.theta(), 2 * QUADRATURE_NODES).integrate(g);
    let scale = fine.abs().max(fine_abs);
    if !coarse.is_finite() || (coarse - fine).abs() > QUADRATURE_RTOL * scale {
        return Err(Error::QuadratureNotConverged { coarse, fine });
    }
    Ok(coarse)
}
