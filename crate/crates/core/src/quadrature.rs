//! Quadrature rules: Gauss-Hermite on the real line, periodic trapezoid on
//! circles, truncated trapezoid on vertical lines, and Gauss-Legendre panels
//! for one-sided tails.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{Mat, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("contours intersect ordering: radius {radius} must be below line abscissa {line_re}")]
    ContourOrder { radius: f64, line_re: f64 },
    #[error("divergent tail: panel contributions not shrinking from s = {s}")]
    DivergentTail { s: f64 },
    #[error("invalid rule parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// Gauss-Hermite: weights include the factor e^{-x^2}.
    RealLine,
    Circle,
    VLine,
    /// Composite Gauss-Legendre panels on a real interval; weights include e^{-x^2}.
    Panel,
}

/// Nodes and weights; `sum_k weights[k] * f(nodes[k])` approximates the integral.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub kind: RuleKind,
    /// Real rules only: `weights[k] * exp(nodes[k]^2)`, for integrands that
    /// already carry their Gaussian decay.
    pub scaled_weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Real parts of the nodes.
    pub fn real_nodes(&self) -> Vec<f64> {
        self.nodes.iter().map(|z| z.re).collect()
    }

    /// `sum_k w_k f(x_k)` with ordered pairwise summation.
    pub fn integrate<F>(&self, f: F) -> Mat
    where
        F: Fn(C64) -> Mat + Sync,
    {
        let terms: Vec<Mat> = self
            .nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(&z, &w)| f(z).scale_c(w))
            .collect();
        pairwise_sum(&terms)
    }

    /// Gauss-Hermite rule applied to an integrand that already decays like e^{-x^2}.
    pub fn integrate_decaying<F>(&self, f: F) -> Result<Mat, QuadError>
    where
        F: Fn(f64) -> Mat + Sync,
    {
        if self.kind != RuleKind::RealLine {
            return Err(QuadError::InvalidParameter("integrate_decaying needs a Gauss-Hermite rule".into()));
        }
        let terms: Vec<Mat> = self
            .nodes
            .par_iter()
            .zip(self.scaled_weights.par_iter())
            .map(|(&x, &w)| f(x.re).scale(w))
            .collect();
        Ok(pairwise_sum(&terms))
    }
}

/// Deterministic pairwise summation of equally shaped matrices.
pub fn pairwise_sum(terms: &[Mat]) -> Mat {
    match terms.len() {
        0 => panic!("pairwise_sum of empty slice"),
        1 => terms[0].clone(),
        2 => &terms[0] + &terms[1],
        n => {
            let (a, b) = terms.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Scalar pairwise summation.
pub fn pairwise_sum_f64(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        n => {
            let (a, b) = terms.split_at(n / 2);
            pairwise_sum_f64(a) + pairwise_sum_f64(b)
        }
    }
}

/// Orthonormal Hermite functions psi_0..psi_{m} at x (psi_k = p_k(x) e^{-x^2/2}).
pub fn hermite_functions(m: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let p0 = (-x * x / 2.0).exp() / PI.powf(0.25);
    out.push(p0);
    if m == 0 {
        return out;
    }
    out.push(2f64.sqrt() * x * p0);
    for j in 1..m {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal matrix.
fn golub_welsch(diag: &[f64], off: &[f64]) -> Vec<(f64, f64)> {
    let m = diag.len();
    let jac = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> =
        (0..m).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Gauss-Hermite rule for the weight e^{-x^2} with `m` nodes.
///
/// Nodes come from the Jacobi matrix and are polished by Newton steps on the
/// Hermite function psi_m; weights use the Christoffel form
/// `e^{-x^2} / sum_j psi_j(x)^2`, which keeps relative accuracy in the tails.
pub fn gauss_hermite(m: usize) -> QuadRule {
    assert!(m >= 1, "gauss_hermite needs at least one node");
    let off: Vec<f64> = (1..m).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let pairs = golub_welsch(&vec![0.0; m], &off);
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    for x in xs.iter_mut() {
        for _ in 0..3 {
            let psi = hermite_functions(m, *x);
            let d = (2.0 * m as f64).sqrt() * psi[m - 1] - *x * psi[m];
            if d != 0.0 && d.is_finite() {
                *x -= psi[m] / d;
            }
        }
    }
    for k in 0..m / 2 {
        let a = 0.5 * (xs[m - 1 - k] - xs[k]);
        xs[k] = -a;
        xs[m - 1 - k] = a;
    }
    if m % 2 == 1 {
        xs[m / 2] = 0.0;
    }
    // Christoffel numbers: w = 1/sum_j p_j^2 = e^{-x^2}/sum_j psi_j^2, so the
    // scaled weight w e^{x^2} is 1/sum_j psi_j^2
    let scaled_weights: Vec<f64> = xs
        .iter()
        .map(|&x| 1.0 / hermite_functions(m - 1, x).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let scaled: Vec<f64> = xs.iter().zip(&scaled_weights).map(|(&x, &w)| (-x * x).exp() * w).collect();
    QuadRule {
        nodes: xs.iter().map(|&x| C64::new(x, 0.0)).collect(),
        weights: scaled.iter().map(|&w| C64::new(w, 0.0)).collect(),
        kind: RuleKind::RealLine,
        scaled_weights,
    }
}

/// Gaussian-weighted composite rule on `[lo, hi]`: `panels` equal panels of
/// `per_panel` Gauss-Legendre nodes, weights multiplied by e^{-x^2}.
pub fn gaussian_panels(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Result<QuadRule, QuadError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || panels == 0 || per_panel == 0 {
        return Err(QuadError::InvalidParameter(format!("bad panel rule [{lo}, {hi}] x {panels} x {per_panel}")));
    }
    let (t, w) = gauss_legendre(per_panel);
    let width = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    let mut scaled_weights = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let a = lo + width * p as f64;
        for (&tk, &wk) in t.iter().zip(&w) {
            let x = a + 0.5 * width * (tk + 1.0);
            let plain = 0.5 * width * wk;
            nodes.push(C64::new(x, 0.0));
            weights.push(C64::new(plain * (-x * x).exp(), 0.0));
            scaled_weights.push(plain);
        }
    }
    Ok(QuadRule { nodes, weights, kind: RuleKind::Panel, scaled_weights })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let off: Vec<f64> = (1..m)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let pairs = golub_welsch(&vec![0.0; m], &off);
    let mut xs = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    for (x0, _) in pairs {
        let mut x = x0;
        for _ in 0..3 {
            let (p, d) = legendre_with_derivative(m, x);
            x -= p / d;
        }
        let (_, d) = legendre_with_derivative(m, x);
        xs.push(x);
        ws.push(2.0 / ((1.0 - x * x) * d * d));
    }
    (xs, ws)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 1..m {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Counter-clockwise periodic trapezoid on |z| = r.
pub fn circle_rule(r: f64, m: usize) -> Result<QuadRule, QuadError> {
    if !(r > 0.0) || m == 0 {
        return Err(QuadError::InvalidParameter(format!("circle radius {r}, nodes {m}")));
    }
    let h = 2.0 * PI / m as f64;
    let nodes: Vec<C64> = (0..m).map(|k| C64::from_polar(r, h * k as f64)).collect();
    let weights = nodes.iter().map(|&z| C64::new(0.0, h) * z).collect();
    Ok(QuadRule { nodes, weights, kind: RuleKind::Circle, scaled_weights: Vec::new() })
}

/// Upward trapezoid on `L + i t`, `|t| <= T`.
pub fn vline_rule(line_re: f64, trunc: f64, m: usize) -> Result<QuadRule, QuadError> {
    if !(trunc > 0.0) || m < 2 {
        return Err(QuadError::InvalidParameter(format!("line truncation {trunc}, nodes {m}")));
    }
    let dt = 2.0 * trunc / (m - 1) as f64;
    let nodes = (0..m).map(|k| C64::new(line_re, -trunc + dt * k as f64)).collect();
    let weights = (0..m)
        .map(|k| {
            let end = k == 0 || k == m - 1;
            C64::new(0.0, if end { dt / 2.0 } else { dt })
        })
        .collect();
    Ok(QuadRule { nodes, weights, kind: RuleKind::VLine, scaled_weights: Vec::new() })
}

/// Default line truncation: e^{L^2 - T^2} below 1e-17.
pub fn default_line_trunc(line_re: f64) -> f64 {
    (line_re * line_re + 40.0).sqrt()
}

pub fn check_contour_order(radius: f64, line_re: f64) -> Result<(), QuadError> {
    if radius >= line_re {
        return Err(QuadError::ContourOrder { radius, line_re });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    pub panel_width: f64,
    pub panel_nodes: usize,
    /// Stop once a panel contributes less than this (max-norm, absolute).
    pub tol: f64,
    /// Panels may only stop once |x| exceeds this; covers the oscillatory bulk.
    pub min_extent: f64,
    pub max_panels: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { panel_width: 0.5, panel_nodes: 20, tol: 1e-16, min_extent: 6.0, max_panels: 400 }
    }
}

/// Tail integral `int_s^inf f(x) dx` for an integrand decaying like
/// e^{-x^2} times a polynomial.
///
/// For `s < 0` this is `int_R f - int_{-inf}^s f` with the full line from the
/// Gauss-Hermite rule; for `s >= 0` panels march right from `s` directly,
/// which avoids cancellation when the tail is tiny.
pub fn tail_integral<F>(f: F, s: f64, full_line: &QuadRule, opts: &TailOptions) -> Result<Mat, QuadError>
where
    F: Fn(f64) -> Mat + Sync,
{
    let (gx, gw) = gauss_legendre(opts.panel_nodes);
    let half = opts.panel_width / 2.0;
    let panel = |a: f64| -> Mat {
        let mid = a + half;
        let terms: Vec<Mat> = gx.iter().zip(gw.iter()).map(|(&t, &w)| f(mid + half * t).scale(w * half)).collect();
        pairwise_sum(&terms)
    };
    let march = |dir: f64| -> Result<Mat, QuadError> {
        let mut parts: Vec<Mat> = Vec::new();
        let mut small_run = 0;
        for k in 0..opts.max_panels {
            let a = if dir > 0.0 { s + k as f64 * opts.panel_width } else { s - (k + 1) as f64 * opts.panel_width };
            let p = panel(a);
            let far = if dir > 0.0 { a + opts.panel_width } else { a };
            let norm = p.max_norm();
            parts.push(p);
            if norm < opts.tol && far.abs() >= opts.min_extent {
                small_run += 1;
                if small_run >= 2 {
                    return Ok(pairwise_sum(&parts));
                }
            } else {
                small_run = 0;
            }
        }
        Err(QuadError::DivergentTail { s })
    };
    if s >= 0.0 {
        march(1.0)
    } else {
        let whole = full_line.integrate_decaying(&f)?;
        Ok(whole - march(-1.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat {
        Mat::scalar(1, C64::new(v, 0.0))
    }

    #[test]
    fn gauss_hermite_gaussian_integral() {
        let q = gauss_hermite(50);
        let v = q.integrate(|_| scalar(1.0));
        assert!((v[(0, 0)].re - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn gauss_hermite_second_moment() {
        let q = gauss_hermite(50);
        let v = q.integrate(|x| scalar(x.re * x.re));
        assert!((v[(0, 0)].re - PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_hermite_orthogonality_of_hermite_polynomials() {
        let q = gauss_hermite(100);
        let v = q
            .integrate_decaying(|x| {
                let psi = hermite_functions(9, x);
                scalar(psi[7] * psi[9])
            })
            .unwrap();
        assert!(v[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn gauss_hermite_is_symmetric_and_positive() {
        let q = gauss_hermite(201);
        let m = q.len();
        for k in 0..m {
            assert_eq!(q.nodes[k].re, -q.nodes[m - 1 - k].re);
            assert!(q.weights[k].re >= 0.0);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x.powi(38)).sum();
        assert!((s - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn circle_winding_number() {
        let q = circle_rule(1.0, 256).unwrap();
        let v = q.integrate(|z| Mat::scalar(1, z.inv() / C64::new(0.0, 2.0 * PI)));
        assert!((v[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn circle_laurent_orthogonality() {
        let q = circle_rule(1.3, 64).unwrap();
        for k in [-3, -2, 0, 1, 2, 5] {
            let v = q.integrate(|z| Mat::scalar(1, crate::matrix::ipow(z, k)));
            assert!(v[(0, 0)].norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn vline_shifted_gaussian() {
        // int_{2+iR} e^{w^2-2w} dw = i sqrt(pi) e^{-1}
        let q = vline_rule(2.0, default_line_trunc(2.0), 400).unwrap();
        let v = q.integrate(|w| Mat::scalar(1, (w * w - 2.0 * w).exp()));
        let want = C64::new(0.0, PI.sqrt() * (-1.0f64).exp());
        assert!((v[(0, 0)] - want).norm() < 1e-13);
    }

    #[test]
    fn contour_order_violation() {
        assert!(matches!(check_contour_order(3.0, 2.0), Err(QuadError::ContourOrder { .. })));
        assert!(check_contour_order(1.0, 2.0).is_ok());
    }

    #[test]
    fn tail_integral_half_gaussian() {
        let q = gauss_hermite(200);
        let f = |x: f64| scalar((-x * x).exp() / PI.sqrt());
        let v = tail_integral(f, 0.0, &q, &TailOptions::default()).unwrap();
        assert!((v[(0, 0)].re - 0.5).abs() < 1e-15);
        let v = tail_integral(f, -0.3, &q, &TailOptions::default()).unwrap();
        let want = 0.5 * (1.0 + erf_oracle(0.3));
        assert!((v[(0, 0)].re - want).abs() < 1e-14);
        let v = tail_integral(f, 40.0, &q, &TailOptions::default()).unwrap();
        assert_eq!(v[(0, 0)].re, 0.0);
    }

    #[test]
    fn tail_integral_divergent() {
        let q = gauss_hermite(20);
        let r = tail_integral(|_| scalar(1.0), 1.0, &q, &TailOptions::default());
        assert!(matches!(r, Err(QuadError::DivergentTail { .. })));
    }

    /// erf by its Maclaurin series (adequate for |x| < 2).
    fn erf_oracle(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..60 {
            term *= -x * x / k as f64;
            sum += term / (2 * k + 1) as f64;
        }
        2.0 / PI.sqrt() * sum
    }
}
