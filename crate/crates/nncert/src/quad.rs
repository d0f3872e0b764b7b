//! Gauss-Legendre quadrature on the unit interval.
//!
//! Nodes and weights come from Newton iteration on the Legendre
//! recurrence; a rule of order `q` integrates polynomials of degree
//! `2q - 1` exactly, which is what the Hadamard-split and Morse-remainder
//! integrals rely on for the polynomial test suites.

use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::Mutex;

/// Default node count per integral node in the certificate IR.
pub const DEFAULT_ORDER: usize = 32;

/// Legendre polynomial value and derivative at `x` via the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_rule(q: usize) -> Vec<(f64, f64)> {
    assert!(q >= 1, "quadrature order must be at least 1");
    if q == 1 {
        return vec![(0.5, 1.0)];
    }
    let mut rule = Vec::with_capacity(q);
    for i in 0..q {
        // Chebyshev-based initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

static RULES: Lazy<Mutex<HashMap<usize, &'static [(f64, f64)]>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Nodes and weights for `∫_0^1 f(s) ds ≈ Σ w_i f(s_i)`. Cached per order.
pub fn unit_rule(q: usize) -> &'static [(f64, f64)] {
    let mut rules = RULES.lock().unwrap();
    rules
        .entry(q)
        .or_insert_with(|| Box::leak(compute_rule(q).into_boxed_slice()))
}
