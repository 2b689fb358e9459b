//! Hermite-type matrix orthogonal polynomial families: weights, monic and
//! normalized polynomials, orthonormal functions and closed-form constants.

use std::f64::consts::PI;

use thiserror::Error;

use crate::matrix::{elementary, nilpotent_exp, IntDiag, Mat, MatrixError, C64};
use crate::quadrature::{gauss_hermite, QuadRule, RuleKind};

const ORTHO_FAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MopError {
    #[error("insufficient quadrature: orthonormality residual {residual:e}")]
    InsufficientQuadrature { residual: f64 },
    #[error("index {n} out of range (family built up to {max})")]
    IndexOutOfRange { n: usize, max: usize },
    #[error("no matrix constants for the scalar family")]
    NoMatrixConstants,
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    /// Weight e^{-x^2} e^{Ax} e^{A^T x}.
    ExampleA,
    /// Weight e^{-x^2} e^{Bx^2} e^{B^T x^2} with B = A(I+A)^{-1}.
    ExampleB,
    /// Classical Hermite weight e^{-x^2}.
    Scalar,
}

/// Family descriptor; the single source of all family constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFamily {
    pub kind: FamilyKind,
    pub nu: f64,
    pub dim: usize,
}

impl WeightFamily {
    pub fn new(kind: FamilyKind, nu: f64) -> Result<Self, MopError> {
        if !nu.is_finite() {
            return Err(MopError::InvalidFamily(format!("nu = {nu}")));
        }
        Ok(match kind {
            FamilyKind::Scalar => WeightFamily { kind, nu: 0.0, dim: 1 },
            _ => WeightFamily { kind, nu, dim: 2 },
        })
    }

    pub fn example_a(nu: f64) -> Self {
        WeightFamily { kind: FamilyKind::ExampleA, nu, dim: 2 }
    }

    pub fn example_b(nu: f64) -> Self {
        WeightFamily { kind: FamilyKind::ExampleB, nu, dim: 2 }
    }

    pub fn scalar() -> Self {
        WeightFamily { kind: FamilyKind::Scalar, nu: 0.0, dim: 1 }
    }

    pub fn is_matrix(&self) -> bool {
        self.kind != FamilyKind::Scalar
    }

    /// Nilpotent shift `nu E_12` (zero for the scalar family).
    pub fn shift(&self) -> Mat {
        match self.kind {
            FamilyKind::Scalar => Mat::zeros(1, 1),
            _ => elementary(2, 2, 0, 1).scale(self.nu),
        }
    }

    /// `B = A (I + A)^{-1}`; equals `A` because `A^2 = 0`.
    pub fn shift_b(&self) -> Mat {
        let a = self.shift();
        let n = a.rows();
        let inv = (Mat::identity(n) + &a).inverse().expect("I + A is unipotent");
        &a * &inv
    }

    /// Exponent diagonal `J = diag(N-1, ..., 0)`.
    pub fn j(&self) -> Mat {
        IntDiag::descending(self.dim).to_mat()
    }

    /// Right factor `T(x)` of the weight: `e^{Ax}` or `e^{Bx^2}`.
    pub fn t_factor(&self, x: f64) -> Mat {
        match self.kind {
            FamilyKind::Scalar => Mat::identity(1),
            FamilyKind::ExampleA => nilpotent_exp(&self.shift(), x).expect("shift is nilpotent"),
            FamilyKind::ExampleB => nilpotent_exp(&self.shift_b(), x * x).expect("shift is nilpotent"),
        }
    }

    /// `T'(x)`.
    pub fn t_factor_deriv(&self, x: f64) -> Mat {
        match self.kind {
            FamilyKind::Scalar => Mat::zeros(1, 1),
            FamilyKind::ExampleA => &self.shift() * &self.t_factor(x),
            FamilyKind::ExampleB => (&self.shift_b() * &self.t_factor(x)).scale(2.0 * x),
        }
    }

    /// `W(x) = e^{-x^2} T(x) T(x)^T`.
    pub fn weight_eval(&self, x: f64) -> Mat {
        let t = self.t_factor(x);
        (&t * &t.transpose()).scale((-x * x).exp())
    }

    /// Exponent diagonal of the integral representations (`J` or `2J`).
    pub fn rep_exponents(&self) -> IntDiag {
        match self.kind {
            FamilyKind::ExampleB => IntDiag::descending(self.dim).scaled(2),
            _ => IntDiag::descending(self.dim),
        }
    }

    /// Left normalizer `S_n` with `P_n = S_n Phat_n`.
    pub fn normalizer(&self, n: usize) -> Mat {
        match self.kind {
            FamilyKind::ExampleB => {
                let half = Mat::identity(2) - self.shift().scale(0.5);
                half.pow(2 * n as u32 + 1)
            }
            _ => Mat::identity(self.dim),
        }
    }
}

/// Free-function form of [`WeightFamily::weight_eval`].
pub fn weight_eval(w: &WeightFamily, x: f64) -> Mat {
    w.weight_eval(x)
}

/// Polynomial with matrix coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPoly {
    coeffs: Vec<Mat>,
    dim: usize,
}

impl MatrixPoly {
    pub fn new(coeffs: Vec<Mat>) -> Self {
        assert!(!coeffs.is_empty());
        let dim = coeffs[0].rows();
        MatrixPoly { coeffs, dim }
    }

    pub fn coeffs(&self) -> &[Mat] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: f64) -> Mat {
        self.eval_c(C64::new(x, 0.0))
    }

    /// Horner evaluation.
    pub fn eval_c(&self, x: C64) -> Mat {
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc.scale_c(x) + c;
        }
        acc
    }

    pub fn derivative(&self) -> MatrixPoly {
        if self.coeffs.len() == 1 {
            return MatrixPoly::new(vec![Mat::zeros(self.dim, self.coeffs[0].cols())]);
        }
        MatrixPoly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c.scale(k as f64)).collect())
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul(&self, m: &Mat) -> MatrixPoly {
        MatrixPoly::new(self.coeffs.iter().map(|c| m * c).collect())
    }

    pub fn is_monic(&self, tol: f64) -> bool {
        (self.coeffs.last().unwrap() - Mat::identity(self.dim)).max_norm() <= tol
    }
}

/// Coefficients of the orthonormal recurrence
/// `Q_{k+1} = x c_k Q_k - d_k Q_k - e_k Q_{k-1}`.
#[derive(Debug, Clone)]
struct OrthoStep {
    c: Mat,
    d: Mat,
    e: Mat,
}

/// A built family of matrix orthogonal polynomials.
#[derive(Debug, Clone)]
pub struct MopFamily {
    pub weight: WeightFamily,
    pub nmax: usize,
    /// Monic polynomials `Phat_0..=Phat_nmax`.
    pub monic: Vec<MatrixPoly>,
    /// Normalized polynomials `P_n = S_n Phat_n`.
    pub normalized: Vec<MatrixPoly>,
    /// `||P_n||^2_W`.
    pub norms: Vec<Mat>,
    /// `||Phat_n||^2_W`.
    pub monic_norms: Vec<Mat>,
    /// Monic recurrence `(a_n, b_n)`: `x Phat_n = Phat_{n+1} + a_n Phat_n + b_n Phat_{n-1}`.
    pub recurrence: Vec<(Mat, Mat)>,
    /// Max orthonormality residual observed on the build rule.
    pub ortho_residual: f64,
    ortho_start: Mat,
    steps: Vec<OrthoStep>,
    /// `||P_n||^{-1} S_n Nhat_n^{1/2}`: maps the symmetric orthonormal basis to the normalized one.
    rotations: Vec<Mat>,
}

/// Reference rule size for a given degree budget.
pub fn reference_nodes(nmax: usize) -> usize {
    200.max(3 * nmax)
}

/// Builds the family up to degree `nmax` with the matrix Stieltjes procedure.
pub fn build_family(weight: &WeightFamily, nmax: usize, quad: &QuadRule) -> Result<MopFamily, MopError> {
    if !matches!(quad.kind, RuleKind::RealLine | RuleKind::Panel) {
        return Err(MopError::InvalidFamily("build_family needs a real Gaussian-weighted rule".into()));
    }
    let dim = weight.dim;
    let xs = quad.real_nodes();
    let ws: Vec<f64> = quad.weights.iter().map(|w| w.re).collect();
    let wt: Vec<Mat> = xs
        .iter()
        .map(|&x| {
            let t = weight.t_factor(x);
            &t * &t.transpose()
        })
        .collect();
    let inner = |a: &[Mat], b: &[Mat]| -> Mat {
        let mut acc = Mat::zeros(dim, dim);
        for k in 0..xs.len() {
            acc += &(&a[k] * &wt[k] * b[k].transpose()).scale(ws[k]);
        }
        acc
    };

    let id = Mat::identity(dim);
    let mut vals: Vec<Vec<Mat>> = vec![vec![id.clone(); xs.len()]];
    let mut monic = vec![MatrixPoly::new(vec![id.clone()])];
    let mut monic_norms = vec![inner(&vals[0], &vals[0])];
    let mut recurrence = Vec::with_capacity(nmax);
    for n in 0..nmax {
        let xp: Vec<Mat> = vals[n].iter().zip(&xs).map(|(p, &x)| p.scale(x)).collect();
        let ninv = monic_norms[n].inverse()?;
        let a = &inner(&xp, &vals[n]) * &ninv;
        let b = if n > 0 { &monic_norms[n] * &monic_norms[n - 1].inverse()? } else { Mat::zeros(dim, dim) };
        let next: Vec<Mat> = (0..xs.len())
            .map(|k| {
                let mut v = &xp[k] - &a * &vals[n][k];
                if n > 0 {
                    v -= &(&b * &vals[n - 1][k]);
                }
                v
            })
            .collect();
        let mut coeffs = vec![Mat::zeros(dim, dim)];
        coeffs.extend(monic[n].coeffs().iter().cloned());
        for (i, c) in monic[n].coeffs().iter().enumerate() {
            coeffs[i] -= &(&a * c);
        }
        if n > 0 {
            for (i, c) in monic[n - 1].coeffs().iter().enumerate() {
                coeffs[i] -= &(&b * c);
            }
        }
        *coeffs.last_mut().unwrap() = id.clone();
        monic.push(MatrixPoly::new(coeffs));
        monic_norms.push(inner(&next, &next));
        vals.push(next);
        recurrence.push((a, b));
    }

    // symmetric orthonormalization L_n = Nhat_n^{-1/2}
    let l: Vec<Mat> = monic_norms.iter().map(|m| m.sym_inv_sqrt()).collect::<Result<_, _>>()?;
    let l_inv: Vec<Mat> = l.iter().map(|m| m.inverse()).collect::<Result<_, _>>()?;
    let steps: Vec<OrthoStep> = recurrence
        .iter()
        .enumerate()
        .map(|(n, (a, b))| OrthoStep {
            c: &l[n + 1] * &l_inv[n],
            d: &l[n + 1] * a * &l_inv[n],
            e: if n > 0 { &l[n + 1] * b * &l_inv[n - 1] } else { Mat::zeros(dim, dim) },
        })
        .collect();

    let mut normalized = Vec::with_capacity(nmax + 1);
    let mut norms = Vec::with_capacity(nmax + 1);
    let mut rotations = Vec::with_capacity(nmax + 1);
    for n in 0..=nmax {
        let s = weight.normalizer(n);
        let norm = &s * &monic_norms[n] * s.transpose();
        rotations.push(&norm.sym_inv_sqrt()? * &s * &l_inv[n]);
        normalized.push(monic[n].left_mul(&s));
        norms.push(norm);
    }

    // orthonormality of Q_n = L_n Phat_n on the build rule
    let q: Vec<Vec<Mat>> = vals.iter().zip(&l).map(|(v, ln)| v.iter().map(|p| ln * p).collect()).collect();
    let mut ortho_residual: f64 = 0.0;
    for j in 0..=nmax {
        for k in j..=nmax {
            let g = inner(&q[j], &q[k]);
            let target = if j == k { id.clone() } else { Mat::zeros(dim, dim) };
            ortho_residual = ortho_residual.max((g - target).max_norm());
        }
    }
    if ortho_residual > ORTHO_FAIL_TOL {
        return Err(MopError::InsufficientQuadrature { residual: ortho_residual });
    }

    Ok(MopFamily {
        weight: *weight,
        nmax,
        monic,
        normalized,
        norms,
        monic_norms,
        recurrence,
        ortho_residual,
        ortho_start: l[0].clone(),
        steps,
        rotations,
    })
}

impl MopFamily {
    /// Builds with the reference Gauss-Hermite rule.
    pub fn build(weight: &WeightFamily, nmax: usize) -> Result<Self, MopError> {
        build_family(weight, nmax, &gauss_hermite(reference_nodes(nmax)))
    }

    pub fn dim(&self) -> usize {
        self.weight.dim
    }

    fn check_index(&self, n: usize) -> Result<(), MopError> {
        if n > self.nmax {
            return Err(MopError::IndexOutOfRange { n, max: self.nmax });
        }
        Ok(())
    }

    /// `Phi_0..Phi_{count-1}` and their derivatives at `x`, via the stable
    /// orthonormal recurrence.
    pub fn phi_with_deriv(&self, count: usize, x: f64) -> Result<(Vec<Mat>, Vec<Mat>), MopError> {
        if count == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        self.check_index(count - 1)?;
        let g = (-x * x / 2.0).exp();
        let dim = self.dim();
        // f_k = e^{-x^2/2} Q_k(x), h_k = e^{-x^2/2} Q_k'(x)
        let mut f = vec![self.ortho_start.scale(g)];
        let mut h = vec![Mat::zeros(dim, dim)];
        for k in 0..count.saturating_sub(1) {
            let st = &self.steps[k];
            let xc = st.c.scale(x) - &st.d;
            let mut fk = &xc * &f[k];
            let mut hk = &st.c * &f[k] + &xc * &h[k];
            if k > 0 {
                fk -= &(&st.e * &f[k - 1]);
                hk -= &(&st.e * &h[k - 1]);
            }
            f.push(fk);
            h.push(hk);
        }
        let t = self.weight.t_factor(x);
        let tp = self.weight.t_factor_deriv(x);
        let mut phis = Vec::with_capacity(count);
        let mut dphis = Vec::with_capacity(count);
        for k in 0..count {
            let r = &self.rotations[k];
            let rf = r * &f[k];
            phis.push(&rf * &t);
            let d = (r * (&h[k] - f[k].scale(x))) * &t + &rf * &tp;
            dphis.push(d);
        }
        Ok((phis, dphis))
    }

    /// `Phi_0..Phi_{count-1}` at `x`.
    pub fn phi_all(&self, count: usize, x: f64) -> Result<Vec<Mat>, MopError> {
        Ok(self.phi_with_deriv(count, x)?.0)
    }

    /// Orthonormal function `Phi_n(x) = e^{-x^2/2} ||P_n||^{-1} P_n(x) T(x)`.
    pub fn phi(&self, n: usize, x: f64) -> Result<Mat, MopError> {
        Ok(self.phi_all(n + 1, x)?.pop().unwrap())
    }

    /// `Phi_n` from the explicit coefficients (accurate for moderate n only).
    pub fn phi_direct(&self, n: usize, x: f64) -> Result<Mat, MopError> {
        self.check_index(n)?;
        let inv_norm = self.norms[n].sym_inv_sqrt()?;
        Ok((&inv_norm * &self.normalized[n].eval(x) * self.weight.t_factor(x)).scale((-x * x / 2.0).exp()))
    }

    /// `P_n''F_2 + P_n'F_1 + P_n F_0 - Gamma_n P_n`.
    pub fn ode_residual(&self, n: usize, x: f64) -> Result<Mat, MopError> {
        self.check_index(n)?;
        let p = &self.normalized[n];
        let d1 = p.derivative();
        let d2 = d1.derivative();
        let dim = self.dim();
        let id = Mat::identity(dim);
        let j = self.weight.j();
        let nf = n as f64;
        let (f1, f0, gamma) = match self.weight.kind {
            FamilyKind::Scalar => (id.scale(-2.0 * x), Mat::zeros(1, 1), id.scale(-2.0 * nf)),
            FamilyKind::ExampleA => {
                let a = self.weight.shift();
                (id.scale(-2.0 * x) + a.scale(2.0), &a * &a - j.scale(2.0), id.scale(-2.0 * nf) - j.scale(2.0))
            }
            FamilyKind::ExampleB => {
                let b = self.weight.shift_b();
                ((b.scale(2.0) - &id).scale(2.0 * x), (b - j.scale(2.0)).scale(2.0), id.scale(-2.0 * nf) - j.scale(4.0))
            }
        };
        let pv = p.eval(x);
        Ok(d2.eval(x) + d1.eval(x) * f1 + &pv * f0 - gamma * &pv)
    }
}

/// `gamma_n^2 = 1 + n nu^2 / 2`.
pub fn gamma_sq(n: usize, nu: f64) -> f64 {
    1.0 + n as f64 * nu * nu / 2.0
}

/// `delta_n^2 = 1 + n(n-1) nu^2 / 4`.
pub fn delta_sq(n: usize, nu: f64) -> f64 {
    let nf = n as f64;
    1.0 + nf * (nf - 1.0) * nu * nu / 4.0
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Closed-form `||P_n||^2_W` (diagonal).
pub fn closed_form_norm(w: &WeightFamily, n: usize) -> Mat {
    let base = factorial(n) * PI.sqrt() / 2f64.powi(n as i32);
    match w.kind {
        FamilyKind::Scalar => Mat::diag_real(&[base]),
        FamilyKind::ExampleA => Mat::diag_real(&[base * gamma_sq(n + 1, w.nu), base / gamma_sq(n, w.nu)]),
        FamilyKind::ExampleB => Mat::diag_real(&[base * delta_sq(n + 2, w.nu), base / delta_sq(n, w.nu)]),
    }
}

/// Closed-form constants of the `N = 2` families.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConstants {
    /// Loop-representation constant.
    pub c: Mat,
    /// Line-representation constant.
    pub d: Mat,
    /// Left kernel factor (2x2 for A, 2x3 for B).
    pub b: Mat,
    /// Right inverse of `b` (2x2 for A, 3x2 for B).
    pub b_hat: Mat,
    pub norm: Mat,
}

pub fn family_constants(w: &WeightFamily, n: usize) -> Result<FamilyConstants, MopError> {
    let nu = w.nu;
    let nf = n as f64;
    let c_pref = C64::new(0.0, -factorial(n) / (2f64.powi(n as i32 + 1) * PI));
    let d_pref = C64::new(0.0, -1.0 / PI.sqrt());
    match w.kind {
        FamilyKind::Scalar => Err(MopError::NoMatrixConstants),
        FamilyKind::ExampleA => {
            let g = gamma_sq(n, nu);
            let c = Mat::from_real_rows(&[&[1.0, nu * (nf + 1.0) / 2.0], &[-nu / g, 1.0 / g]]).scale_c(c_pref);
            let d = Mat::from_real_rows(&[&[1.0, nu], &[-nf * nu / (2.0 * g), 1.0 / g]]).scale_c(d_pref);
            let b = Mat::from_real_rows(&[&[1.0, -nu], &[nf * nu / 2.0, 1.0]]);
            let b_hat = Mat::from_real_rows(&[&[1.0 / g, nu / g], &[-nf * nu / (2.0 * g), 1.0 / g]]);
            Ok(FamilyConstants { c, d, b, b_hat, norm: closed_form_norm(w, n) })
        }
        FamilyKind::ExampleB => {
            let d0 = delta_sq(n, nu);
            let d1 = delta_sq(n + 1, nu);
            let c = Mat::from_real_rows(&[&[1.0, nu * (nf + 1.0) * (nf + 2.0) / 4.0], &[-nu / d0, 1.0 / d0]])
                .scale_c(c_pref);
            let d = Mat::from_real_rows(&[&[1.0, nu], &[-nf * (nf - 1.0) * nu / (4.0 * d0), 1.0 / d0]]).scale_c(d_pref);
            let b = Mat::from_real_rows(&[
                &[1.0 / d1, nf * nu * nu / (2.0 * d1 * d0), -nu],
                &[nu * nf * (nf + 1.0) / (4.0 * d1), -nf * nu / (2.0 * d1 * d0), 1.0],
            ]);
            let b_hat =
                Mat::from_real_rows(&[&[1.0, nu], &[1.0, nu], &[-nu * nf * (nf - 1.0) / (4.0 * d0), 1.0 / d0]]);
            Ok(FamilyConstants { c, d, b, b_hat, norm: closed_form_norm(w, n) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_at_origin_is_identity() {
        assert_eq!(WeightFamily::example_a(1.0).weight_eval(0.0), Mat::identity(2));
    }

    #[test]
    fn weight_example_a_at_one() {
        let w = WeightFamily::example_a(1.0).weight_eval(1.0);
        let want = Mat::from_real_rows(&[&[2.0, 1.0], &[1.0, 1.0]]).scale((-1f64).exp());
        assert!((w - want).max_norm() < 1e-16);
    }

    #[test]
    fn scalar_weight() {
        let w = WeightFamily::scalar().weight_eval(1.0);
        assert!((w[(0, 0)].re - (-1f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn shift_b_equals_shift_for_two_by_two() {
        let w = WeightFamily::example_b(0.8);
        assert!((w.shift_b() - w.shift()).max_norm() < 1e-16);
    }

    #[test]
    fn example_a_first_norm_is_gaussian_moment() {
        let f = MopFamily::build(&WeightFamily::example_a(1.0), 4).unwrap();
        let want = Mat::diag_real(&[PI.sqrt() * 1.5, PI.sqrt()]);
        assert!((&f.norms[0] - want).max_norm() < 1e-13);
        assert_eq!(f.normalized[0].coeffs()[0], Mat::identity(2));
    }

    #[test]
    fn nu_zero_gives_scalar_hermite_times_identity() {
        let f = MopFamily::build(&WeightFamily::example_a(0.0), 6).unwrap();
        let s = MopFamily::build(&WeightFamily::scalar(), 6).unwrap();
        for n in 0..=6 {
            for (cm, cs) in f.monic[n].coeffs().iter().zip(s.monic[n].coeffs()) {
                let want = Mat::identity(2).scale_c(cs[(0, 0)]);
                assert!((cm - &want).max_norm() <= 1e-12 * (1.0 + cs[(0, 0)].norm()));
            }
        }
    }

    #[test]
    fn norms_match_closed_form() {
        for w in [WeightFamily::example_a(1.0), WeightFamily::example_b(1.0)] {
            let f = MopFamily::build(&w, 8).unwrap();
            for n in 0..=8 {
                let want = closed_form_norm(&w, n);
                let rel = (&f.norms[n] - &want).max_norm() / want.max_norm();
                assert!(rel < 1e-8, "{:?} n={n} rel={rel:e}", w.kind);
            }
        }
    }

    #[test]
    fn phi_recurrence_matches_direct() {
        let f = MopFamily::build(&WeightFamily::example_b(0.7), 8).unwrap();
        for n in 0..=8 {
            for x in [-1.3, 0.0, 0.4, 2.2] {
                let a = f.phi(n, x).unwrap();
                let b = f.phi_direct(n, x).unwrap();
                assert!((a - b).max_norm() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn phi_derivative_matches_finite_difference() {
        let f = MopFamily::build(&WeightFamily::example_a(1.0), 6).unwrap();
        let h = 1e-5;
        for x in [-1.0, 0.3, 1.7] {
            let (_, d) = f.phi_with_deriv(7, x).unwrap();
            let p = f.phi_all(7, x + h).unwrap();
            let m = f.phi_all(7, x - h).unwrap();
            for k in 0..7 {
                let fd = (&p[k] - &m[k]).scale(0.5 / h);
                assert!((&d[k] - fd).max_norm() < 1e-8);
            }
        }
    }

    #[test]
    fn scalar_phi_is_hermite_function() {
        let f = MopFamily::build(&WeightFamily::scalar(), 10).unwrap();
        let psi = crate::quadrature::hermite_functions(10, 0.9);
        for n in 0..=10 {
            assert!((f.phi(n, 0.9).unwrap()[(0, 0)].re - psi[n]).abs() < 1e-13);
        }
    }

    #[test]
    fn ode_residual_constant_polynomial() {
        let f = MopFamily::build(&WeightFamily::example_a(1.3), 2).unwrap();
        assert!(f.ode_residual(0, 0.7).unwrap().max_norm() < 1e-15);
    }

    #[test]
    fn ode_residual_small() {
        let fa = MopFamily::build(&WeightFamily::example_a(1.0), 6).unwrap();
        assert!(fa.ode_residual(5, 0.3).unwrap().max_norm() < 1e-8);
        let fb = MopFamily::build(&WeightFamily::example_b(0.5), 6).unwrap();
        assert!(fb.ode_residual(4, -1.1).unwrap().max_norm() < 1e-8);
    }

    #[test]
    fn constants_c0_example_a() {
        let k = family_constants(&WeightFamily::example_a(1.0), 0).unwrap();
        let pref = C64::new(0.0, -1.0 / (2.0 * PI));
        let want = Mat::from_real_rows(&[&[1.0, 0.5], &[-1.0, 1.0]]).scale_c(pref);
        assert!((k.c - want).max_norm() < 1e-16);
    }

    #[test]
    fn constants_det_and_right_inverse() {
        for n in 0..8 {
            let a = family_constants(&WeightFamily::example_a(0.9), n).unwrap();
            assert!((a.b.det().unwrap().re - gamma_sq(n, 0.9)).abs() < 1e-14);
            assert!((&a.b * &a.b_hat - Mat::identity(2)).max_norm() < 1e-14);
            let b = family_constants(&WeightFamily::example_b(0.7), n).unwrap();
            assert!((&b.b * &b.b_hat - Mat::identity(2)).max_norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_has_no_matrix_constants() {
        assert_eq!(family_constants(&WeightFamily::scalar(), 1), Err(MopError::NoMatrixConstants));
    }

    #[test]
    fn coarse_quadrature_is_rejected() {
        let r = build_family(&WeightFamily::example_a(1.0), 12, &gauss_hermite(8));
        assert!(matches!(r, Err(MopError::InsufficientQuadrature { .. })));
    }

    #[test]
    fn out_of_range_index() {
        let f = MopFamily::build(&WeightFamily::scalar(), 3).unwrap();
        assert!(matches!(f.phi(4, 0.0), Err(MopError::IndexOutOfRange { .. })));
    }
}
