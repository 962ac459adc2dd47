//! Node/weight rules for expectations under the standard Gaussian.
//!
//! All rules are stored in probabilists' normalization: `E[f(g)] ~ sum_j w_j f(x_j)`
//! with `g ~ N(0, 1)` and weights summing to one.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stats::log_sum_exp_seq;

/// Panel count and Legendre points per panel of the default rule.
pub const DEFAULT_PANELS: usize = 128;
pub const DEFAULT_POINTS_PER_PANEL: usize = 16;
/// Half-width of the truncated integration window, in standard deviations.
pub const DEFAULT_HALF_WIDTH: f64 = 24.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

/// log E[e^{m f}] together with the mean and variance of `f` under the tilted law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gaussian_composite(DEFAULT_PANELS, DEFAULT_POINTS_PER_PANEL, DEFAULT_HALF_WIDTH)
    }
}

impl QuadratureRule {
    /// Gauss-Hermite rule of the given order for the standard normal density.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 2, "quadrature order must be at least 2");
        let mut pairs = hermite_probabilists(order);
        // enforce exact symmetry of the computed nodes
        let n = pairs.len();
        for i in 0..n / 2 {
            let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
            let lw = 0.5 * (pairs[i].1 + pairs[n - 1 - i].1);
            pairs[i] = (-x, lw);
            pairs[n - 1 - i] = (x, lw);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        Self::from_log_weights(pairs)
    }

    /// Composite Gauss-Legendre rule on `[-half_width, half_width]` with the
    /// Gaussian density folded into the weights. `panels` must be even so the
    /// node set is symmetric about zero.
    pub fn gaussian_composite(panels: usize, points_per_panel: usize, half_width: f64) -> Self {
        assert!(panels >= 2 && panels % 2 == 0, "panel count must be even and >= 2");
        assert!(points_per_panel >= 1 && half_width > 0.0);
        let (t, tw) = legendre(points_per_panel);
        let h = 2.0 * half_width / panels as f64;
        let log_norm = 0.5 * (2.0 * PI).ln();
        let mut positive = Vec::with_capacity(panels / 2 * points_per_panel);
        for p in 0..panels / 2 {
            let a = p as f64 * h;
            let mid = a + 0.5 * h;
            for (&ti, &wi) in t.iter().zip(&tw) {
                let x = mid + 0.5 * h * ti;
                positive.push((x, (0.5 * h * wi).ln() - 0.5 * x * x - log_norm));
            }
        }
        let mut pairs: Vec<(f64, f64)> = positive.iter().map(|&(x, lw)| (-x, lw)).collect();
        pairs.extend(positive);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_log_weights(pairs)
    }

    fn from_log_weights(pairs: Vec<(f64, f64)>) -> Self {
        let log_total = log_sum_exp_seq(pairs.iter().map(|p| p.1));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let log_weights: Vec<f64> = pairs.iter().map(|p| p.1 - log_total).collect();
        let weights = log_weights.iter().map(|l| l.exp()).collect();
        Self { nodes, weights, log_weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Plain expectation `E[f(g)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Tilted moments of `f`: `log E[e^{m f(g)}]`, and mean/variance of `f`
    /// under the density proportional to `e^{m f}`, all in log domain.
    pub fn tilted(&self, m: f64, f: impl Fn(f64) -> f64) -> Result<TiltedMoments> {
        let values: Vec<f64> = self.nodes.iter().map(|&x| f(x)).collect();
        self.tilted_values(m, &values)
    }

    /// As [`tilted`](Self::tilted) with `f` already evaluated at the nodes.
    pub fn tilted_values(&self, m: f64, values: &[f64]) -> Result<TiltedMoments> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "integrand at quadrature node" });
        }
        let exponents: Vec<f64> = self.log_weights.iter().zip(values).map(|(lw, v)| lw + m * v).collect();
        let log_z = log_sum_exp_seq(exponents.iter().copied());
        if !log_z.is_finite() {
            return Err(Error::NonFinite { context: "log-moment generating function" });
        }
        let probs: Vec<f64> = exponents.iter().map(|e| (e - log_z).exp()).collect();
        let mean: f64 = probs.iter().zip(values).map(|(p, v)| p * v).sum();
        let var: f64 = probs.iter().zip(values).map(|(p, v)| p * (v - mean) * (v - mean)).sum();
        Ok(TiltedMoments { log_z, mean, var })
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Probabilists' Gauss-Hermite rule: nodes are the eigenvalues of the Jacobi
/// matrix (zero diagonal, off-diagonal `sqrt(k)`), located by Sturm-sequence
/// bisection; weights are the inverse Christoffel function
/// `1 / sum_k p_k(x)^2` of the orthonormal polynomials.
fn hermite_probabilists(n: usize) -> Vec<(f64, f64)> {
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = -x;
        if d < 0.0 {
            count += 1;
        }
        for k in 1..n {
            if d == 0.0 {
                d = f64::EPSILON;
            }
            d = -x - k as f64 / d;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bound = 2.0 * (n as f64).sqrt() + 1.0;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let (mut p_prev, mut p) = (0.0, 1.0);
        let mut christoffel = 1.0;
        for k in 0..n - 1 {
            let next = (x * p - (k as f64).sqrt() * p_prev) / ((k + 1) as f64).sqrt();
            p_prev = p;
            p = next;
            christoffel += p * p;
        }
        out.push((x, -christoffel.ln()));
    }
    out
}
